use std::ffi::{CStr, CString};
use std::ptr;

use radar_tta_ffi::*;
use tempfile::TempDir;

const SPEC: &str = r#"{"events": 6, "per_event": 8, "dims": [4, 4, 4]}"#;

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn last_error() -> String {
    let p = radar_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

struct Pair {
    source: *mut RadarDataset,
    target: *mut RadarDataset,
}

impl Drop for Pair {
    fn drop(&mut self) {
        unsafe {
            radar_dataset_free(self.source);
            radar_dataset_free(self.target);
        }
    }
}

fn synth(seed: u64) -> Pair {
    let (mut s, mut t) = (ptr::null_mut(), ptr::null_mut());
    let spec = c(SPEC);
    let st = unsafe { radar_dataset_synthetic(spec.as_ptr(), seed, &mut s, &mut t) };
    assert_eq!(st, RadarStatus::Ok);
    Pair {
        source: s,
        target: t,
    }
}

fn trained(p: &Pair) -> *mut RadarModel {
    let mut dims = [0usize; 3];
    let mut m = ptr::null_mut();
    unsafe {
        assert_eq!(
            radar_dataset_dims(p.source, dims.as_mut_ptr()),
            RadarStatus::Ok
        );
        assert_eq!(
            radar_model_init(dims.as_ptr(), 8, 0, &mut m),
            RadarStatus::Ok
        );
        let cfg = c(r#"{"epochs": 3, "optimizer": {"learning_rate": 0.005}}"#);
        assert_eq!(radar_pretrain(m, p.source, cfg.as_ptr()), RadarStatus::Ok);
    }
    m
}

fn predict(m: *const RadarModel, d: *const RadarDataset) -> Vec<f64> {
    let n = unsafe { radar_dataset_len(d) };
    let mut probs = vec![0.0; 2 * n];
    assert_eq!(
        unsafe { radar_model_predict(m, d, probs.as_mut_ptr(), probs.len()) },
        RadarStatus::Ok
    );
    probs
}

#[test]
fn synthetic_pair_matches_library() {
    let p = synth(3);
    assert_eq!(unsafe { radar_dataset_len(p.source) }, 48);
    let mut dims = [0usize; 3];
    assert_eq!(
        unsafe { radar_dataset_dims(p.target, dims.as_mut_ptr()) },
        RadarStatus::Ok
    );
    assert_eq!(dims, [4, 4, 4]);
    assert!(radar_last_error().is_null());
}

#[test]
fn save_load_round_trip() {
    let dir = TempDir::new().unwrap();
    let p = synth(1);
    let m = trained(&p);
    let (dpath, mpath) = (
        c(dir.path().join("t.jsonl").to_str().unwrap()),
        c(dir.path().join("m.ckpt").to_str().unwrap()),
    );
    unsafe {
        assert_eq!(
            radar_dataset_save(p.target, dpath.as_ptr()),
            RadarStatus::Ok
        );
        assert_eq!(radar_model_save(m, mpath.as_ptr()), RadarStatus::Ok);
        let (mut d2, mut m2) = (ptr::null_mut(), ptr::null_mut());
        assert_eq!(
            radar_dataset_load(dpath.as_ptr(), RadarRole::Target, &mut d2),
            RadarStatus::Ok
        );
        assert_eq!(radar_model_load(mpath.as_ptr(), &mut m2), RadarStatus::Ok);
        assert_eq!(predict(m, p.target), predict(m2, d2));
        radar_dataset_free(d2);
        radar_model_free(m2);
        radar_model_free(m);
    }
}

#[test]
fn adapt_reports_metrics_and_losses() {
    let p = synth(2);
    let m = trained(&p);
    unsafe {
        let mut copy = ptr::null_mut();
        assert_eq!(radar_model_clone(m, &mut copy), RadarStatus::Ok);
        let cfg = c(r#"{"batch_size": 7, "learning_rate": 0.001, "ablations": ["plain_em"]}"#);
        let mut r = ptr::null_mut();
        assert_eq!(
            radar_adapt(copy, p.target, cfg.as_ptr(), &mut r),
            RadarStatus::Ok
        );
        assert_eq!(radar_report_num_batches(r), 48usize.div_ceil(7));
        let mut met = RadarMetrics::default();
        assert_eq!(radar_report_metrics(r, &mut met), RadarStatus::Ok);
        assert_eq!(met.available, 1);
        assert_eq!(met.count, 48);
        assert!((0.0..=1.0).contains(&met.macro_f1));
        let mut losses = [f64::NAN; 4];
        for b in 0..radar_report_num_batches(r) {
            assert_eq!(
                radar_report_batch_losses(r, b, losses.as_mut_ptr()),
                RadarStatus::Ok
            );
            assert_eq!(losses[0], 0.0);
            assert_eq!(losses[1], 0.0);
            assert_eq!(losses[2], losses[3]);
        }
        assert_eq!(
            radar_report_batch_losses(r, 99, losses.as_mut_ptr()),
            RadarStatus::InvalidArgument
        );
        assert!(last_error().contains("out of range"));
        // the original handle is untouched, the adapted copy moved
        assert_ne!(predict(m, p.target), predict(copy, p.target));

        let dir = TempDir::new().unwrap();
        let path = c(dir.path().join("r.jsonl").to_str().unwrap());
        assert_eq!(
            radar_report_write(r, path.as_ptr(), 1, 0, 1),
            RadarStatus::Ok
        );
        let text = std::fs::read_to_string(dir.path().join("r.jsonl")).unwrap();
        assert!(text.lines().next().unwrap().contains("\"kind\":\"config\""));
        assert!(text.contains("pre_entropy"));
        radar_report_free(r);
        radar_model_free(copy);
        radar_model_free(m);
    }
}

#[test]
fn mmd_and_entropy() {
    let p = synth(4);
    let (mut total, mut per) = (0.0, [0.0; 3]);
    unsafe {
        assert_eq!(
            radar_mmd(p.source, p.target, 2.0, &mut total, per.as_mut_ptr()),
            RadarStatus::Ok
        );
        assert!((per.iter().sum::<f64>() - total).abs() < 1e-12);
        let mut only = 0.0;
        assert_eq!(
            radar_mmd(p.source, p.target, 2.0, &mut only, ptr::null_mut()),
            RadarStatus::Ok
        );
        assert_eq!(only, total);
        assert_eq!(
            radar_mmd(p.source, p.target, 0.0, &mut only, ptr::null_mut()),
            RadarStatus::InvalidArgument
        );

        let mut h = 0.0;
        let probs = [0.5, 0.5];
        assert_eq!(radar_entropy(probs.as_ptr(), 2, &mut h), RadarStatus::Ok);
        assert!((h - std::f64::consts::LN_2).abs() < 1e-15);
        let bad = [0.9, 0.9];
        assert_eq!(
            radar_entropy(bad.as_ptr(), 2, &mut h),
            RadarStatus::InvalidArgument
        );
    }
}

#[test]
fn errors_set_status_and_message() {
    unsafe {
        let mut d = ptr::null_mut();
        let missing = c("/nonexistent/radar.jsonl");
        assert_eq!(
            radar_dataset_load(missing.as_ptr(), RadarRole::Source, &mut d),
            RadarStatus::Io
        );
        assert!(last_error().contains("radar.jsonl"));
        assert!(d.is_null());

        assert_eq!(
            radar_dataset_load(ptr::null(), RadarRole::Source, &mut d),
            RadarStatus::NullPointer
        );
        let (mut s, mut t) = (ptr::null_mut(), ptr::null_mut());
        let bad = c(r#"{"events": 0}"#);
        assert_eq!(
            radar_dataset_synthetic(bad.as_ptr(), 0, &mut s, &mut t),
            RadarStatus::InvalidArgument
        );
        let unknown = c(r#"{"evnts": 3}"#);
        assert_eq!(
            radar_dataset_synthetic(unknown.as_ptr(), 0, &mut s, &mut t),
            RadarStatus::InvalidArgument
        );
        assert!(last_error().contains("evnts"));
        let garbage = c("{not json");
        assert_eq!(
            radar_dataset_synthetic(garbage.as_ptr(), 0, &mut s, &mut t),
            RadarStatus::InvalidArgument
        );

        let p = synth(5);
        let m = trained(&p);
        let mut small = [0.0; 3];
        assert_eq!(
            radar_model_predict(m, p.target, small.as_mut_ptr(), 3),
            RadarStatus::BufferTooSmall
        );
        let mut r = ptr::null_mut();
        let k0 = c(r#"{"k": 0}"#);
        assert_eq!(
            radar_adapt(m, p.target, k0.as_ptr(), &mut r),
            RadarStatus::InvalidArgument
        );
        assert!(r.is_null());
        // target widths must match the model
        let other = c(r#"{"events": 2, "per_event": 4, "dims": [3, 3, 3]}"#);
        assert_eq!(
            radar_dataset_synthetic(other.as_ptr(), 0, &mut s, &mut t),
            RadarStatus::Ok
        );
        assert_ne!(radar_adapt(m, t, ptr::null(), &mut r), RadarStatus::Ok);
        radar_dataset_free(s);
        radar_dataset_free(t);
        radar_model_free(m);

        assert_eq!(radar_dataset_len(ptr::null()), 0);
        assert_eq!(radar_report_num_batches(ptr::null()), 0);
        radar_model_free(ptr::null_mut());
        radar_report_free(ptr::null_mut());
    }
}

#[test]
fn version_string() {
    let v = unsafe { CStr::from_ptr(radar_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}
