//! Independent reference implementations and reusable criterion checks.
//!
//! The oracles below are written directly from the formulas, without
//! sharing code with the library (no stability shifts, different loop
//! order), so agreement is meaningful.

#![allow(dead_code)]

pub mod grad;

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use radar_tta::adaptation::{
    adapt_stream, frozen_predictions, total_loss, Ablation, AdaptConfig, AdaptationReport,
    LossComponents,
};
use radar_tta::alignment::{
    anchor_weights, anchors_from, cosine_alignment, AlignTarget, Encodings,
};
use radar_tta::feature_io::{
    generate_synthetic, plan_eventwise_batches, plan_random_batches, BatchPlan, Dataset,
    ModalityDims, SynthSpec, VideoRecord,
};
use radar_tta::memory_bank::MemoryBank;
use radar_tta::mmd::mmd2_unbiased;
use radar_tta::pseudo_label::{combine_scores, self_training_loss, PseudoLabel};
use radar_tta::retrieval::{retrieve_with, RetrievalMode, RetrievalParams};
use radar_tta::source_model::{
    forward, init_model, pretrain, AdaptableMask, AlignSpec, ForwardTrace, LossSpec, ModelConfig,
    ModelParams, PretrainConfig,
};

pub type Check = Result<String, String>;

pub fn gauss(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    (0..n)
        .map(|_| rng.sample::<f64, _>(StandardNormal))
        .collect()
}

pub fn random_record(rng: &mut impl Rng, id: usize, dims: ModalityDims) -> VideoRecord {
    VideoRecord::new(
        format!("r{id:03}"),
        format!("e{}", id % 3),
        id as u64,
        gauss(rng, dims.0[0]),
        gauss(rng, dims.0[1]),
        gauss(rng, dims.0[2]),
        None,
    )
}

pub fn small_model(rng: &mut ChaCha8Rng, dims: ModalityDims) -> ModelParams {
    let mut cfg = ModelConfig::with_dims(dims, [4, 6, 8][rng.random_range(0..3)]);
    cfg.fusion_layers = rng.random_range(1..3);
    let mut p = init_model(&cfg, rng.random()).unwrap();
    p.for_each_mut(|_, t| {
        for x in &mut t.data {
            *x += 0.3 * rng.sample::<f64, _>(StandardNormal);
        }
    });
    p
}

// ---------------------------------------------------------------- oracles

fn cos(x: &[f64], y: &[f64]) -> f64 {
    let mut xy = 0.0;
    let mut xx = 0.0;
    let mut yy = 0.0;
    for i in (0..x.len()).rev() {
        xy += x[i] * y[i];
        xx += x[i] * x[i];
        yy += y[i] * y[i];
    }
    xy / (xx.sqrt() * yy.sqrt())
}

pub fn oracle_sim(q: &VideoRecord, c: &VideoRecord) -> f64 {
    (0..3).map(|m| cos(&q.features[m], &c.features[m])).sum()
}

pub fn oracle_entropy(p: &[f64]) -> f64 {
    p.iter()
        .map(|&x| if x > 0.0 { -x * x.ln() } else { 0.0 })
        .sum()
}

/// Ids and similarities of the stable references of `query` among
/// `bank` (oldest first), given each entry's entropy.
pub fn oracle_retrieve(
    bank: &[(&VideoRecord, u64, f64)],
    query: &VideoRecord,
    k: usize,
    e0: f64,
) -> Vec<(String, f64)> {
    let mut cands: Vec<(f64, u64, String, f64)> = bank
        .iter()
        .filter(|(r, _, _)| r.id != query.id)
        .map(|(r, seq, h)| (oracle_sim(query, r), *seq, r.id.clone(), *h))
        .collect();
    // selection sort on (sim desc, seq asc, id asc)
    let mut picked = Vec::new();
    while picked.len() < k && !cands.is_empty() {
        let mut best = 0;
        for i in 1..cands.len() {
            let (a, b) = (&cands[i], &cands[best]);
            if a.0 > b.0 || (a.0 == b.0 && (a.1 < b.1 || (a.1 == b.1 && a.2 < b.2))) {
                best = i;
            }
        }
        picked.push(cands.remove(best));
    }
    picked
        .into_iter()
        .filter(|c| c.3 < e0)
        .map(|c| (c.2, c.0))
        .collect()
}

pub fn oracle_anchor_weights(ents: &[f64]) -> Vec<f64> {
    let z: f64 = ents.iter().map(|e| (-e).exp()).sum();
    ents.iter().map(|e| (-e).exp() / z).collect()
}

pub fn oracle_alignment(f: &Encodings, refs: &[Encodings], ents: &[f64]) -> f64 {
    let w = oracle_anchor_weights(ents);
    let mut loss = 0.0;
    for m in 0..3 {
        let anchor: Vec<f64> = (0..f[m].len())
            .map(|k| (0..refs.len()).map(|i| w[i] * refs[i][m][k]).sum())
            .collect();
        loss += 1.0 - cos(&f[m], &anchor);
    }
    loss
}

pub fn oracle_pseudo(
    query: &[f64],
    refs: &[Vec<f64>],
    sims: &[f64],
    alpha: f64,
    beta: f64,
) -> (Vec<f64>, usize) {
    let z: f64 = sims.iter().map(|s| s.exp()).sum();
    let scores: Vec<f64> = (0..query.len())
        .map(|c| {
            alpha * query[c]
                + (0..refs.len())
                    .map(|i| beta * sims[i].exp() / z * refs[i][c])
                    .sum::<f64>()
        })
        .collect();
    let label = if scores[1] > scores[0] { 1 } else { 0 };
    (scores, label)
}

pub fn oracle_mmd(x: &[Vec<f64>], y: &[Vec<f64>], sigma: f64) -> f64 {
    let k = |a: &[f64], b: &[f64]| {
        let d: f64 = a.iter().zip(b).map(|(p, q)| (p - q).powi(2)).sum();
        (-d / (2.0 * sigma * sigma)).exp()
    };
    let (m, n) = (x.len() as f64, y.len() as f64);
    let mut kxx = 0.0;
    for (i, a) in x.iter().enumerate() {
        for (j, b) in x.iter().enumerate() {
            if i != j {
                kxx += k(a, b);
            }
        }
    }
    let mut kyy = 0.0;
    for (i, a) in y.iter().enumerate() {
        for (j, b) in y.iter().enumerate() {
            if i != j {
                kyy += k(a, b);
            }
        }
    }
    let kxy: f64 = x.iter().flat_map(|a| y.iter().map(move |b| k(a, b))).sum();
    kxx / (m * (m - 1.0)) + kyy / (n * (n - 1.0)) - 2.0 * kxy / (m * n)
}

// ------------------------------------------------------- criterion 1

fn worst(errs: impl IntoIterator<Item = f64>) -> f64 {
    errs.into_iter().fold(0.0, f64::max)
}

fn within(name: &str, n: usize, err: f64, tol: f64) -> Check {
    if err <= tol {
        Ok(format!("{name}: {n} instances, max error {err:.1e}"))
    } else {
        Err(format!("{name}: max error {err:.3e} exceeds {tol:e}"))
    }
}

pub fn oracle_retrieval(n: usize, seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut err = 0.0f64;
    for case in 0..n {
        let dims = ModalityDims([
            rng.random_range(1..6),
            rng.random_range(1..6),
            rng.random_range(1..6),
        ]);
        let size = rng.random_range(1..20);
        let mut recs: Vec<VideoRecord> = (0..size)
            .map(|i| random_record(&mut rng, i, dims))
            .collect();
        // exact duplicates exercise the tie rules
        if size > 2 && rng.random_bool(0.5) {
            let mut dup = recs[0].clone();
            dup.id = "dup".into();
            recs.push(dup);
        }
        let ents: Vec<f64> = (0..recs.len())
            .map(|_| rng.random_range(0.0..0.7))
            .collect();
        let cap = rng.random_range(1..=recs.len());
        let mut bank = MemoryBank::new(cap, dims).unwrap();
        for chunk in recs.chunks(rng.random_range(1..5)) {
            bank.insert_batch(&chunk.iter().collect::<Vec<_>>())
                .unwrap();
        }
        let by_id: HashMap<&str, f64> = recs
            .iter()
            .zip(&ents)
            .map(|(r, &h)| (r.id.as_str(), h))
            .collect();
        let snapshot: Vec<(&VideoRecord, u64, f64)> = bank
            .scan()
            .map(|e| (e.record, e.seq, by_id[e.record.id.as_str()]))
            .collect();
        let query = if rng.random_bool(0.3) {
            recs[recs.len() - 1].clone()
        } else {
            random_record(&mut rng, 900, dims)
        };
        let k = rng.random_range(1..10);
        let e0 = rng.random_range(0.05..0.69);
        let got = retrieve_with(&bank, &query, &RetrievalParams::new(k, e0), |e| {
            Ok(by_id[e.record.id.as_str()])
        })
        .unwrap();
        let want = oracle_retrieve(&snapshot, &query, k, e0);
        let got_ids: Vec<&str> = got.refs.iter().map(|r| r.record.id.as_str()).collect();
        let want_ids: Vec<&str> = want.iter().map(|w| w.0.as_str()).collect();
        if got_ids != want_ids {
            return Err(format!(
                "retrieval case {case}: got {got_ids:?}, oracle {want_ids:?}"
            ));
        }
        err = err.max(worst(
            got.refs
                .iter()
                .zip(&want)
                .map(|(r, w)| (r.sim_total - w.1).abs()),
        ));
    }
    within("retrieval", n, err, 1e-10)
}

pub fn oracle_anchors_and_alignment(n: usize, seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut ew, mut ea) = (0.0f64, 0.0f64);
    for _ in 0..n {
        let d = rng.random_range(2..9);
        let l = rng.random_range(1..9);
        let ents: Vec<f64> = (0..l).map(|_| rng.random_range(0.0..0.6931)).collect();
        let refs: Vec<Encodings> = (0..l)
            .map(|_| std::array::from_fn(|_| gauss(&mut rng, d)))
            .collect();
        let f: Encodings = std::array::from_fn(|_| gauss(&mut rng, d));
        let w = anchor_weights(&ents).unwrap();
        ew = ew.max(worst(
            w.iter()
                .zip(oracle_anchor_weights(&ents))
                .map(|(a, b)| (a - b).abs()),
        ));
        let views: Vec<&Encodings> = refs.iter().collect();
        let anchors = anchors_from(&ents, &views).unwrap();
        let got = cosine_alignment(&f, &anchors).unwrap();
        ea = ea.max((got - oracle_alignment(&f, &refs, &ents)).abs());
    }
    Ok(format!(
        "{}; {}",
        within("anchor weights", n, ew, 1e-10)?,
        within("alignment loss", n, ea, 1e-10)?
    ))
}

pub fn oracle_pseudo_labels(n: usize, seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut es, mut ece) = (0.0f64, 0.0f64);
    let dims = ModalityDims([3, 4, 5]);
    for case in 0..n {
        let model = small_model(&mut rng, dims);
        let trace = forward(&model, &random_record(&mut rng, 0, dims)).unwrap();
        let l = rng.random_range(0..8);
        let refs: Vec<Vec<f64>> = (0..l)
            .map(|_| {
                let p = rng.random_range(0.0..1.0);
                vec![p, 1.0 - p]
            })
            .collect();
        let sims: Vec<f64> = (0..l).map(|_| rng.random_range(-3.0..3.0)).collect();
        let (alpha, beta) = (rng.random_range(0.0..1.0), rng.random_range(0.0..1.0));
        let views: Vec<&[f64]> = refs.iter().map(Vec::as_slice).collect();
        let pl = combine_scores("q", &trace.probs, &views, &sims, alpha, beta).unwrap();
        let (scores, label) = oracle_pseudo(&trace.probs, &refs, &sims, alpha, beta);
        if pl.label != label {
            return Err(format!(
                "pseudo-label case {case}: label {} vs oracle {label}",
                pl.label
            ));
        }
        es = es.max(worst(
            pl.combined_scores
                .iter()
                .zip(&scores)
                .map(|(a, b)| (a - b).abs()),
        ));
        let (ce, _) = self_training_loss(&trace, &pl);
        ece = ece.max((ce + trace.probs[label].max(1e-12).ln()).abs());
    }
    Ok(format!(
        "{}; {}",
        within("pseudo-label", n, es, 1e-10)?,
        within("self-training loss", n, ece, 1e-10)?
    ))
}

/// Batch objective against per-sample terms computed by the oracles.
pub fn oracle_total_loss(n: usize, seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut err = 0.0f64;
    let dims = ModalityDims([2, 3, 4]);
    for _ in 0..n {
        let model = small_model(&mut rng, dims);
        let d = model.config.encoder_out;
        let b = rng.random_range(1..7);
        let traces: Vec<ForwardTrace> = (0..b)
            .map(|i| forward(&model, &random_record(&mut rng, i, dims)).unwrap())
            .collect();
        let labels: Vec<usize> = (0..b).map(|_| rng.random_range(0..2)).collect();
        let gamma = rng.random_range(0.0..3.0);
        let mut raw: Vec<Option<(Vec<Encodings>, Vec<f64>)>> = Vec::new();
        let mut targets = Vec::new();
        for _ in 0..b {
            if rng.random_bool(0.3) {
                raw.push(None);
                targets.push(None);
                continue;
            }
            let l = rng.random_range(1..5);
            let refs: Vec<Encodings> = (0..l)
                .map(|_| std::array::from_fn(|_| gauss(&mut rng, d)))
                .collect();
            let ents: Vec<f64> = (0..l).map(|_| rng.random_range(0.0..0.69)).collect();
            let views: Vec<&Encodings> = refs.iter().collect();
            targets.push(Some(AlignTarget::Anchors(
                anchors_from(&ents, &views).unwrap(),
            )));
            raw.push(Some((refs, ents)));
        }
        let spec = LossSpec {
            entropy: true,
            self_train: Some(labels.clone()),
            supervised: None,
            align: Some(AlignSpec { gamma, targets }),
        };
        let got = spec.evaluate(&traces).unwrap();

        let ent = traces.iter().map(|t| oracle_entropy(&t.probs)).sum::<f64>() / b as f64;
        let st = traces
            .iter()
            .zip(&labels)
            .map(|(t, &y)| -t.probs[y].max(1e-12).ln())
            .sum::<f64>()
            / b as f64;
        let aligned: Vec<f64> = traces
            .iter()
            .zip(&raw)
            .filter_map(|(t, r)| {
                r.as_ref()
                    .map(|(refs, ents)| oracle_alignment(&t.encoder_outputs, refs, ents))
            })
            .collect();
        let al = if aligned.is_empty() {
            0.0
        } else {
            aligned.iter().sum::<f64>() / aligned.len() as f64
        };
        let want = gamma * al + st + ent;
        err = err.max((got.total - want).abs());
        let comps = LossComponents {
            align: got.align,
            self_train: got.self_train,
            entropy: got.entropy,
        };
        err = err.max((total_loss(&comps, gamma).unwrap() - want).abs());
    }
    within("total loss", n, err, 1e-12)
}

pub fn oracle_mmd_estimator(n: usize, seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut err = 0.0f64;
    for _ in 0..n {
        let d = rng.random_range(1..6);
        let (m, k) = (rng.random_range(2..12), rng.random_range(2..12));
        let shift = rng.random_range(0.0..2.0);
        let x: Vec<Vec<f64>> = (0..m).map(|_| gauss(&mut rng, d)).collect();
        let y: Vec<Vec<f64>> = (0..k)
            .map(|_| gauss(&mut rng, d).into_iter().map(|v| v + shift).collect())
            .collect();
        let sigma = rng.random_range(0.3..3.0);
        err = err.max((mmd2_unbiased(&x, &y, sigma).unwrap() - oracle_mmd(&x, &y, sigma)).abs());
    }
    within("MMD", n, err, 1e-10)
}

// ------------------------------------------------------- criterion 3

/// A small labeled target stream with a source-pretrained model.
pub struct Fixture {
    pub model: ModelParams,
    pub target: Dataset,
}

pub fn fixture(seed: u64) -> Fixture {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spec = SynthSpec {
        events: rng.random_range(2..6),
        per_event: rng.random_range(2..7),
        dims: ModalityDims([
            rng.random_range(2..5),
            rng.random_range(2..5),
            rng.random_range(2..5),
        ]),
        ..SynthSpec::default()
    };
    let (source, target) = generate_synthetic(&spec, seed).unwrap();
    let cfg = ModelConfig::with_dims(spec.dims, 4);
    let pre = PretrainConfig {
        epochs: 3,
        seed,
        ..PretrainConfig::default()
    };
    let (model, _) = pretrain(init_model(&cfg, seed).unwrap(), &source, &pre).unwrap();
    Fixture { model, target }
}

pub fn random_setup(rng: &mut ChaCha8Rng, target: &Dataset) -> (BatchPlan, AdaptConfig) {
    let batch = rng.random_range(1..6);
    let plan = if rng.random_bool(0.5) {
        plan_eventwise_batches(target, batch).unwrap()
    } else {
        plan_random_batches(target, batch, rng.random()).unwrap()
    };
    let mut cfg = AdaptConfig {
        k: rng.random_range(1..6),
        entropy_threshold: rng.random_range(0.05..0.69),
        bank_capacity: rng.random_bool(0.5).then(|| rng.random_range(1..12)),
        learning_rate: [1e-4, 1e-3, 1e-2][rng.random_range(0..3)],
        batch_size: batch,
        ..AdaptConfig::default()
    };
    if rng.random_bool(0.5) {
        let a = Ablation::ALL[rng.random_range(0..Ablation::ALL.len())];
        cfg = cfg.with_ablation(a);
    }
    (plan, cfg)
}

fn fail(what: &str, detail: impl std::fmt::Display) -> String {
    format!("{what}: {detail}")
}

/// Coverage, update-then-predict, frozen immutability, |R| <= K,
/// ablation zeros and determinism for one random configuration.
pub fn protocol_case(seed: u64) -> Result<(), String> {
    let fx = fixture(seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let (plan, cfg) = random_setup(&mut rng, &fx.target);
    let mask = AdaptableMask::standard(&fx.model);
    let mut model = fx.model.clone();
    let report = adapt_stream(&mut model, &fx.target, &plan, &cfg).map_err(|e| fail("adapt", e))?;

    // single-pass coverage
    let mut ids: Vec<&str> = report.records.iter().map(|r| r.id.as_str()).collect();
    ids.sort_unstable();
    let mut want: Vec<&str> = fx.target.records().iter().map(|r| r.id.as_str()).collect();
    want.sort_unstable();
    if ids != want {
        return Err(fail(
            "coverage",
            format!("{} predictions for {} records", ids.len(), want.len()),
        ));
    }

    // frozen tensors bitwise unchanged
    let before = fx.model.tensors();
    let after = model.tensors();
    for (i, ((name, a), (_, b))) in before.iter().zip(&after).enumerate() {
        if !mask.flags[i]
            && a.data
                .iter()
                .zip(&b.data)
                .any(|(x, y)| x.to_bits() != y.to_bits())
        {
            return Err(fail("frozen tensor changed", name));
        }
    }

    // |R| <= K, and references only when retrieval is active
    if let Some(r) = report.records.iter().find(|r| r.references > cfg.k) {
        return Err(fail("|R| > K", &r.id));
    }

    // ablated terms report exactly zero
    let c = cfg.components();
    for b in &report.batches {
        if (!c.align && b.losses.align != 0.0) || (!c.self_train && b.losses.self_train != 0.0) {
            return Err(fail("ablated loss nonzero", b.index));
        }
    }

    // FIFO suffix of the presentation order after each batch
    let order: Vec<&str> = plan.batches.iter().flatten().map(String::as_str).collect();
    let mut seen = 0;
    for (b, stats) in report.batches.iter().enumerate() {
        seen += plan.batches[b].len();
        let m = cfg.capacity().min(seen);
        if stats
            .bank_ids
            .iter()
            .map(String::as_str)
            .ne(order[seen - m..seen].iter().copied())
        {
            return Err(fail("bank is not the FIFO suffix", b));
        }
    }

    // update-then-predict: batch b is predicted by the parameters after
    // b + 1 steps, reproduced by adapting on the prefix alone
    let b = rng.random_range(0..plan.batches.len());
    let prefix_ids: Vec<&String> = plan.batches[..=b].iter().flatten().collect();
    let mut idx: Vec<usize> = prefix_ids
        .iter()
        .map(|id| fx.target.position(id).unwrap())
        .collect();
    idx.sort_unstable();
    let prefix = fx.target.subset(&idx).unwrap();
    let prefix_plan = BatchPlan {
        batches: plan.batches[..=b].to_vec(),
        ..plan.clone()
    };
    let mut stepped = fx.model.clone();
    adapt_stream(&mut stepped, &prefix, &prefix_plan, &cfg).map_err(|e| fail("prefix adapt", e))?;
    for r in report.records.iter().filter(|r| r.batch == b) {
        let t = forward(
            &stepped,
            &fx.target.records()[fx.target.position(&r.id).unwrap()],
        )
        .unwrap();
        if t.probs
            .iter()
            .zip(&r.probs)
            .any(|(x, y)| x.to_bits() != y.to_bits())
        {
            return Err(fail("prediction not from post-update parameters", &r.id));
        }
    }
    // determinism
    let mut again = fx.model.clone();
    let second = adapt_stream(&mut again, &fx.target, &plan, &cfg).map_err(|e| fail("adapt", e))?;
    if second != report || again != model {
        return Err(fail("non-deterministic", seed));
    }
    Ok(())
}

/// Bank contents equal the last `M` inserted records for random batches.
pub fn fifo_case(seed: u64) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dims = ModalityDims([1, 1, 1]);
    let n = rng.random_range(1..40);
    let recs: Vec<VideoRecord> = (0..n).map(|i| random_record(&mut rng, i, dims)).collect();
    let cap = rng.random_range(1..15);
    let mut bank = MemoryBank::new(cap, dims).unwrap();
    let mut inserted: Vec<&str> = Vec::new();
    let mut rest: &[VideoRecord] = &recs;
    while !rest.is_empty() {
        let take = rng.random_range(1..=rest.len().min(6));
        let (head, tail) = rest.split_at(take);
        bank.insert_batch(&head.iter().collect::<Vec<_>>()).unwrap();
        inserted.extend(head.iter().map(|r| r.id.as_str()));
        let m = cap.min(inserted.len());
        if bank.ids() != inserted[inserted.len() - m..] {
            return Err(format!(
                "bank {:?} is not the suffix of {:?}",
                bank.ids(),
                inserted
            ));
        }
        rest = tail;
    }
    Ok(())
}

/// References are the Top-K by similarity with entropy strictly below E0,
/// including entries whose entropy equals E0 exactly.
pub fn threshold_case(seed: u64) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dims = ModalityDims([2, 2, 2]);
    let n = rng.random_range(1..25);
    let recs: Vec<VideoRecord> = (0..n).map(|i| random_record(&mut rng, i, dims)).collect();
    let e0 = [0.1, 0.25, 0.4, 0.6][rng.random_range(0..4)];
    let ents: Vec<f64> = (0..n)
        .map(|_| match rng.random_range(0..3) {
            0 => e0,
            1 => rng.random_range(0.0..e0),
            _ => rng.random_range(e0..0.7),
        })
        .collect();
    let mut bank = MemoryBank::new(rng.random_range(1..30), dims).unwrap();
    bank.insert_batch(&recs.iter().collect::<Vec<_>>()).unwrap();
    let by_id: HashMap<&str, f64> = recs
        .iter()
        .zip(&ents)
        .map(|(r, &h)| (r.id.as_str(), h))
        .collect();
    let query = random_record(&mut rng, 999, dims);
    let k = rng.random_range(1..12);
    for mode in [
        RetrievalMode::SimilarityThenEntropy,
        RetrievalMode::SimilarityOnly,
        RetrievalMode::EntropyOnly,
    ] {
        let params = RetrievalParams {
            k,
            entropy_threshold: e0,
            mode,
        };
        let got =
            retrieve_with(&bank, &query, &params, |e| Ok(by_id[e.record.id.as_str()])).unwrap();
        if got.len() > k {
            return Err(format!("{mode:?}: {} references for K = {k}", got.len()));
        }
        if mode != RetrievalMode::SimilarityOnly {
            if let Some(r) = got.refs.iter().find(|r| r.entropy >= e0) {
                return Err(format!(
                    "{mode:?}: reference {} has entropy {} >= {e0}",
                    r.record.id, r.entropy
                ));
            }
        }
        if got.refs.windows(2).any(|w| w[0].sim_total < w[1].sim_total) {
            return Err(format!("{mode:?}: references not sorted by similarity"));
        }
    }
    Ok(())
}

// ------------------------------------------------------- criteria 5-7

/// `(mean, standard error)` over seeds.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Per-record `(entropy, correct)` of the frozen model on a labeled
/// target.
pub fn frozen_entropy_samples(model: &ModelParams, target: &Dataset) -> Vec<(f64, bool)> {
    let preds = frozen_predictions(model, target).unwrap();
    preds
        .iter()
        .enumerate()
        .map(|(i, (c, p))| (oracle_entropy(p), Some(*c) == target.evaluation_label(i)))
        .collect()
}

pub fn macro_f1(report: &AdaptationReport) -> f64 {
    report.metrics.expect("labeled target").macro_f1
}

pub fn pseudo_of(report: &AdaptationReport) -> Vec<&PseudoLabel> {
    report
        .records
        .iter()
        .filter_map(|r| r.pseudo.as_ref())
        .collect()
}
