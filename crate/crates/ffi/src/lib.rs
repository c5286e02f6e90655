//! C ABI over `radar_tta`.
//!
//! Objects are opaque handles created by `radar_*_load`, `radar_*_init` or
//! the generator and released by the matching `radar_*_free`. Every
//! fallible call returns a [`RadarStatus`]; on failure the message is
//! available from [`radar_last_error`] on the same thread. Configuration
//! is passed as JSON text whose keys overlay the library defaults; a null
//! pointer means all defaults.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::fs::File;
use std::io::BufWriter;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use radar_tta::adaptation::{
    adapt_stream, write_report, AdaptConfig, AdaptationReport, ReportOptions,
};
use radar_tta::feature_io::{
    generate_synthetic, load_dataset, plan_eventwise_batches, plan_random_batches, save_dataset,
    BatchMode, Dataset, ModalityDims, Role, SynthSpec, NUM_CLASSES,
};
use radar_tta::mmd::{dataset_mmd_with, MmdConfig};
use radar_tta::source_model::{
    entropy, forward, init_model, pretrain, Checkpoint, ModelConfig, ModelParams, PretrainConfig,
};
use radar_tta::RadarError;
use serde_json::Value;

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RadarStatus {
    Ok = 0,
    InvalidArgument = 1,
    Io = 2,
    Format = 3,
    InvalidRecord = 4,
    DimensionMismatch = 5,
    NonFinite = 6,
    ZeroVector = 7,
    Diverged = 8,
    Checkpoint = 9,
    Report = 10,
    NullPointer = 11,
    BufferTooSmall = 12,
    Panic = 13,
}

/// Which role a dataset file is loaded as. Source files must be labeled;
/// target labels are kept only for evaluation.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RadarRole {
    Source = 0,
    Target = 1,
}

/// Aggregate metrics of an adaptation run. `available` is 0 when the
/// target carried no labels.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RadarMetrics {
    pub available: i32,
    pub accuracy: f64,
    pub macro_f1: f64,
    pub macro_recall: f64,
    pub count: usize,
}

/// A loaded or generated dataset.
pub struct RadarDataset(Dataset);

/// Model parameters with their architecture.
pub struct RadarModel(ModelParams);

/// The outcome of one adaptation run.
pub struct RadarReport(AdaptationReport);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(RadarStatus, String);

impl From<RadarError> for Failure {
    fn from(e: RadarError) -> Self {
        let status = match &e {
            RadarError::InvalidArgument(_) => RadarStatus::InvalidArgument,
            RadarError::Io { .. } => RadarStatus::Io,
            RadarError::Format { .. } => RadarStatus::Format,
            RadarError::InvalidRecord { .. } => RadarStatus::InvalidRecord,
            RadarError::DimensionMismatch { .. } => RadarStatus::DimensionMismatch,
            RadarError::NonFinite(_) => RadarStatus::NonFinite,
            RadarError::ZeroVector(_) => RadarStatus::ZeroVector,
            RadarError::Diverged { .. } | RadarError::AdaptationDiverged { .. } => {
                RadarStatus::Diverged
            }
            RadarError::Checkpoint(_) => RadarStatus::Checkpoint,
            RadarError::Report(_) => RadarStatus::Report,
        };
        Failure(status, e.to_string())
    }
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure(RadarStatus::InvalidArgument, msg.into())
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("no interior nul");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> RadarStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            RadarStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("internal panic: {msg}"));
            RadarStatus::Panic
        }
    }
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure(RadarStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| invalid(format!("{what} is not valid UTF-8")))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref()
        .ok_or_else(|| Failure(RadarStatus::NullPointer, format!("{what} is null")))
}

unsafe fn handle_mut<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut()
        .ok_or_else(|| Failure(RadarStatus::NullPointer, format!("{what} is null")))
}

unsafe fn out<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    handle_mut(p, what)
}

fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Defaults overlaid with the keys of a JSON object; unknown keys are
/// rejected.
unsafe fn config<T>(json: *const c_char, what: &str) -> Result<T, Failure>
where
    T: Default + serde::Serialize + serde::de::DeserializeOwned,
{
    let mut base = serde_json::to_value(T::default()).expect("defaults serialize");
    if !json.is_null() {
        let over: Value =
            serde_json::from_str(text(json, what)?).map_err(|e| invalid(format!("{what}: {e}")))?;
        if !over.is_object() {
            return Err(invalid(format!("{what} must be a JSON object")));
        }
        check_keys(&base, &over, what)?;
        merge(&mut base, over);
    }
    serde_json::from_value(base).map_err(|e| invalid(format!("{what}: {e}")))
}

fn check_keys(base: &Value, over: &Value, path: &str) -> Result<(), Failure> {
    if let (Value::Object(b), Value::Object(o)) = (base, over) {
        for (k, v) in o {
            match b.get(k) {
                Some(inner) => check_keys(inner, v, &format!("{path}.{k}"))?,
                None => return Err(invalid(format!("{path}: unknown key {k:?}"))),
            }
        }
    }
    Ok(())
}

fn boxed<T>(v: T) -> *mut T {
    Box::into_raw(Box::new(v))
}

/// Message of the last failed call on this thread, or null after a
/// successful call. Valid until the next call on this thread.
#[no_mangle]
pub extern "C" fn radar_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn radar_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads a line-record dataset file.
///
/// # Safety
/// `path` must be a valid C string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn radar_dataset_load(
    path: *const c_char,
    role: RadarRole,
    out_dataset: *mut *mut RadarDataset,
) -> RadarStatus {
    guard(|| {
        let slot = out(out_dataset, "out_dataset")?;
        let role = match role {
            RadarRole::Source => Role::Source,
            RadarRole::Target => Role::Target,
        };
        let ds = load_dataset(text(path, "path")?, role)?;
        *slot = boxed(RadarDataset(ds));
        Ok(())
    })
}

/// Writes a dataset in the line-record format.
///
/// # Safety
/// `dataset` must be a live handle and `path` a valid C string.
#[no_mangle]
pub unsafe extern "C" fn radar_dataset_save(
    dataset: *const RadarDataset,
    path: *const c_char,
) -> RadarStatus {
    guard(|| {
        let ds = handle(dataset, "dataset")?;
        save_dataset(&ds.0, text(path, "path")?)?;
        Ok(())
    })
}

/// Generates a synthetic source and target pair. `spec_json` overlays the
/// generator defaults, e.g. `{"events": 10, "shift": 2.0}`.
///
/// # Safety
/// `spec_json` must be null or a valid C string; the out pointers must be
/// valid.
#[no_mangle]
pub unsafe extern "C" fn radar_dataset_synthetic(
    spec_json: *const c_char,
    seed: u64,
    out_source: *mut *mut RadarDataset,
    out_target: *mut *mut RadarDataset,
) -> RadarStatus {
    guard(|| {
        let s = out(out_source, "out_source")?;
        let t = out(out_target, "out_target")?;
        let spec: SynthSpec = config(spec_json, "spec")?;
        let (source, target) = generate_synthetic(&spec, seed)?;
        *s = boxed(RadarDataset(source));
        *t = boxed(RadarDataset(target));
        Ok(())
    })
}

/// Number of records; 0 for a null handle.
///
/// # Safety
/// `dataset` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn radar_dataset_len(dataset: *const RadarDataset) -> usize {
    dataset.as_ref().map_or(0, |d| d.0.len())
}

/// Writes the visual, text and audio widths into `out_dims[0..3]`.
///
/// # Safety
/// `dataset` must be a live handle and `out_dims` point to 3 writable values.
#[no_mangle]
pub unsafe extern "C" fn radar_dataset_dims(
    dataset: *const RadarDataset,
    out_dims: *mut usize,
) -> RadarStatus {
    guard(|| {
        let ds = handle(dataset, "dataset")?;
        if out_dims.is_null() {
            return Err(Failure(RadarStatus::NullPointer, "out_dims is null".into()));
        }
        let dims = ds.0.dims().0;
        std::slice::from_raw_parts_mut(out_dims, 3).copy_from_slice(&dims);
        Ok(())
    })
}

/// # Safety
/// `dataset` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn radar_dataset_free(dataset: *mut RadarDataset) {
    if !dataset.is_null() {
        drop(Box::from_raw(dataset));
    }
}

/// Initializes a model for the given input widths and encoder width `D_m`,
/// with the remaining architecture derived from `D_m`.
///
/// # Safety
/// `input_dims` must point to 3 readable values and `out_model` be valid.
#[no_mangle]
pub unsafe extern "C" fn radar_model_init(
    input_dims: *const usize,
    encoder_out: usize,
    seed: u64,
    out_model: *mut *mut RadarModel,
) -> RadarStatus {
    guard(|| {
        let slot = out(out_model, "out_model")?;
        if input_dims.is_null() {
            return Err(Failure(
                RadarStatus::NullPointer,
                "input_dims is null".into(),
            ));
        }
        let mut dims = [0; 3];
        dims.copy_from_slice(std::slice::from_raw_parts(input_dims, 3));
        let cfg = ModelConfig::with_dims(ModalityDims(dims), encoder_out);
        *slot = boxed(RadarModel(init_model(&cfg, seed)?));
        Ok(())
    })
}

/// Loads the parameters of a checkpoint file.
///
/// # Safety
/// `path` must be a valid C string and `out_model` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn radar_model_load(
    path: *const c_char,
    out_model: *mut *mut RadarModel,
) -> RadarStatus {
    guard(|| {
        let slot = out(out_model, "out_model")?;
        let ck = Checkpoint::load(text(path, "path")?)?;
        *slot = boxed(RadarModel(ck.params));
        Ok(())
    })
}

/// Writes a checkpoint with the standard adaptable mask.
///
/// # Safety
/// `model` must be a live handle and `path` a valid C string.
#[no_mangle]
pub unsafe extern "C" fn radar_model_save(
    model: *const RadarModel,
    path: *const c_char,
) -> RadarStatus {
    guard(|| {
        let m = handle(model, "model")?;
        Checkpoint::new(m.0.clone(), "").save(text(path, "path")?)?;
        Ok(())
    })
}

/// Independent copy of a model.
///
/// # Safety
/// `model` must be a live handle and `out_model` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn radar_model_clone(
    model: *const RadarModel,
    out_model: *mut *mut RadarModel,
) -> RadarStatus {
    guard(|| {
        let m = handle(model, "model")?;
        let slot = out(out_model, "out_model")?;
        *slot = boxed(RadarModel(m.0.clone()));
        Ok(())
    })
}

/// # Safety
/// `model` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn radar_model_free(model: *mut RadarModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Supervised training on a labeled source dataset, in place. `config_json`
/// overlays the defaults (`epochs`, `batch_size`, `seed`, `optimizer`).
///
/// # Safety
/// Handles must be live; `config_json` null or a valid C string.
#[no_mangle]
pub unsafe extern "C" fn radar_pretrain(
    model: *mut RadarModel,
    source: *const RadarDataset,
    config_json: *const c_char,
) -> RadarStatus {
    guard(|| {
        let m = handle_mut(model, "model")?;
        let ds = handle(source, "source")?;
        let cfg: PretrainConfig = config(config_json, "config")?;
        let (trained, _) = pretrain(m.0.clone(), &ds.0, &cfg)?;
        m.0 = trained;
        Ok(())
    })
}

/// Class probabilities of every record, row-major into `out_probs`, which
/// must hold `len * 2` values.
///
/// # Safety
/// Handles must be live and `out_probs` point to `capacity` writable values.
#[no_mangle]
pub unsafe extern "C" fn radar_model_predict(
    model: *const RadarModel,
    dataset: *const RadarDataset,
    out_probs: *mut f64,
    capacity: usize,
) -> RadarStatus {
    guard(|| {
        let m = handle(model, "model")?;
        let ds = handle(dataset, "dataset")?;
        let need = ds.0.len() * NUM_CLASSES;
        if capacity < need {
            return Err(Failure(
                RadarStatus::BufferTooSmall,
                format!("need {need} values, buffer holds {capacity}"),
            ));
        }
        if out_probs.is_null() && need > 0 {
            return Err(Failure(
                RadarStatus::NullPointer,
                "out_probs is null".into(),
            ));
        }
        for (i, r) in ds.0.records().iter().enumerate() {
            let p = forward(&m.0, r)?.probs;
            std::slice::from_raw_parts_mut(out_probs.add(i * NUM_CLASSES), NUM_CLASSES)
                .copy_from_slice(&p);
        }
        Ok(())
    })
}

/// Adapts `model` in place over the target stream and returns the report.
/// `config_json` overlays the adaptation defaults; `mode` and `batch_size`
/// select the batch plan.
///
/// # Safety
/// Handles must be live; `config_json` null or a valid C string;
/// `out_report` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn radar_adapt(
    model: *mut RadarModel,
    target: *const RadarDataset,
    config_json: *const c_char,
    out_report: *mut *mut RadarReport,
) -> RadarStatus {
    guard(|| {
        let m = handle_mut(model, "model")?;
        let ds = handle(target, "target")?;
        let slot = out(out_report, "out_report")?;
        let cfg: AdaptConfig = config(config_json, "config")?;
        cfg.validate()?;
        let plan = match cfg.mode {
            BatchMode::EventWise => plan_eventwise_batches(&ds.0, cfg.batch_size)?,
            BatchMode::Random => plan_random_batches(&ds.0, cfg.batch_size, cfg.seed)?,
        };
        let report = adapt_stream(&mut m.0, &ds.0, &plan, &cfg)?;
        *slot = boxed(RadarReport(report));
        Ok(())
    })
}

/// # Safety
/// `report` must be a live handle and `out_metrics` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn radar_report_metrics(
    report: *const RadarReport,
    out_metrics: *mut RadarMetrics,
) -> RadarStatus {
    guard(|| {
        let r = handle(report, "report")?;
        let slot = out(out_metrics, "out_metrics")?;
        *slot =
            r.0.metrics
                .map_or_else(RadarMetrics::default, |m| RadarMetrics {
                    available: 1,
                    accuracy: m.accuracy,
                    macro_f1: m.macro_f1,
                    macro_recall: m.macro_recall,
                    count: m.count,
                });
        Ok(())
    })
}

/// Number of batches; 0 for a null handle.
///
/// # Safety
/// `report` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn radar_report_num_batches(report: *const RadarReport) -> usize {
    report.as_ref().map_or(0, |r| r.0.batches.len())
}

/// Loss terms of one batch into `out_losses[0..4]`: alignment, self-training,
/// entropy, total.
///
/// # Safety
/// `report` must be a live handle and `out_losses` point to 4 writable values.
#[no_mangle]
pub unsafe extern "C" fn radar_report_batch_losses(
    report: *const RadarReport,
    batch: usize,
    out_losses: *mut f64,
) -> RadarStatus {
    guard(|| {
        let r = handle(report, "report")?;
        if out_losses.is_null() {
            return Err(Failure(
                RadarStatus::NullPointer,
                "out_losses is null".into(),
            ));
        }
        let b = r.0.batches.get(batch).ok_or_else(|| {
            invalid(format!(
                "batch {batch} out of range ({} batches)",
                r.0.batches.len()
            ))
        })?;
        let vals = [
            b.losses.align,
            b.losses.self_train,
            b.losses.entropy,
            b.total,
        ];
        std::slice::from_raw_parts_mut(out_losses, 4).copy_from_slice(&vals);
        Ok(())
    })
}

/// Writes the line-record report stream. Non-zero flags add per-record
/// entropies, pseudo-labels and bank contents.
///
/// # Safety
/// `report` must be a live handle and `path` a valid C string.
#[no_mangle]
pub unsafe extern "C" fn radar_report_write(
    report: *const RadarReport,
    path: *const c_char,
    trace_entropy: i32,
    trace_pseudo: i32,
    trace_bank: i32,
) -> RadarStatus {
    guard(|| {
        let r = handle(report, "report")?;
        let path = text(path, "path")?;
        let f = File::create(path).map_err(|e| Failure(RadarStatus::Io, format!("{path}: {e}")))?;
        let opts = ReportOptions {
            trace_entropy: trace_entropy != 0,
            trace_pseudo: trace_pseudo != 0,
            trace_bank: trace_bank != 0,
            echo: None,
        };
        write_report(&r.0, &opts, &mut BufWriter::new(f))?;
        Ok(())
    })
}

/// # Safety
/// `report` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn radar_report_free(report: *mut RadarReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

/// Unbiased squared MMD between two datasets with a Gaussian kernel,
/// summed over modalities. `out_per_modality` may be null; otherwise it
/// receives the three per-modality estimates.
///
/// # Safety
/// Handles must be live, `out_total` valid and `out_per_modality` null or
/// pointing to 3 writable values.
#[no_mangle]
pub unsafe extern "C" fn radar_mmd(
    a: *const RadarDataset,
    b: *const RadarDataset,
    sigma: f64,
    out_total: *mut f64,
    out_per_modality: *mut f64,
) -> RadarStatus {
    guard(|| {
        let (a, b) = (handle(a, "a")?, handle(b, "b")?);
        let total = out(out_total, "out_total")?;
        let cfg = MmdConfig {
            sigma,
            per_modality: true,
        };
        let r = dataset_mmd_with(&a.0, &b.0, &cfg)?;
        *total = r.total;
        if !out_per_modality.is_null() {
            std::slice::from_raw_parts_mut(out_per_modality, 3).copy_from_slice(&r.per_modality);
        }
        Ok(())
    })
}

/// Shannon entropy (natural log) of a probability vector.
///
/// # Safety
/// `probs` must point to `len` readable values and `out_entropy` be valid.
#[no_mangle]
pub unsafe extern "C" fn radar_entropy(
    probs: *const f64,
    len: usize,
    out_entropy: *mut f64,
) -> RadarStatus {
    guard(|| {
        let slot = out(out_entropy, "out_entropy")?;
        if probs.is_null() {
            return Err(Failure(RadarStatus::NullPointer, "probs is null".into()));
        }
        *slot = entropy(std::slice::from_raw_parts(probs, len))?;
        Ok(())
    })
}
