//! The online adaptation loop: per batch, insert into the bank, retrieve
//! stable references, build anchors and pseudo-labels, take one optimizer
//! step on the adaptable tensors, then predict with the updated model.

mod config;
mod metrics;
mod report;

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

pub use config::{Ablation, AdaptConfig, Components};
pub use metrics::{macro_metrics, Metrics};
pub use report::{
    entropy_buckets, read_report, summary_table, write_report, EntropyBucket, ReportFile,
    ReportOptions,
};

use crate::alignment::{anchors_from, reference_mean, AlignTarget, Encodings};
use crate::error::{RadarError, Result};
use crate::feature_io::{BatchPlan, Class, Dataset, Role, VideoRecord, NUM_CLASSES};
use crate::memory_bank::MemoryBank;
use crate::pseudo_label::{pseudo_label_from, PseudoLabel};
use crate::retrieval::{retrieve_with, ReferenceSet};
use crate::source_model::{
    entropy_unchecked, forward, loss_and_gradients, Adam, AdaptableMask, AlignSpec, ForwardTrace,
    LossSpec, ModelParams,
};

/// Mean loss terms of one batch.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossComponents {
    /// Mean over queries with references.
    pub align: f64,
    pub self_train: f64,
    pub entropy: f64,
}

/// `gamma * align + self_train + entropy`.
pub fn total_loss(c: &LossComponents, gamma: f64) -> Result<f64> {
    for (name, v) in [
        ("align", c.align),
        ("self_train", c.self_train),
        ("entropy", c.entropy),
    ] {
        if !v.is_finite() {
            return Err(RadarError::NonFinite(format!("{name} loss component")));
        }
    }
    Ok(gamma * c.align + c.self_train + c.entropy)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchStats {
    pub index: usize,
    pub size: usize,
    pub losses: LossComponents,
    pub total: f64,
    /// Queries with at least one reference.
    pub covered: usize,
    /// Cross-entropy terms that hit the probability floor.
    pub clamped: usize,
    pub grad_norm: f64,
    /// Bank contents after insertion, oldest first.
    pub bank_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordOutcome {
    pub id: String,
    pub event_id: String,
    pub batch: usize,
    pub prediction: Class,
    pub probs: Vec<f64>,
    /// Entropy at retrieval time, before the batch's update.
    pub pre_entropy: f64,
    /// Entropy of the reported prediction.
    pub post_entropy: f64,
    pub pseudo: Option<PseudoLabel>,
    pub references: usize,
    /// Ground truth, for evaluation only.
    pub label: Option<Class>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventStats {
    pub event_id: String,
    pub count: usize,
    pub class_counts: [usize; NUM_CLASSES],
    /// Majority over minority class count; infinite for single-class
    /// events, serialized as `null`.
    pub imbalance_ratio: Option<f64>,
    pub accuracy: f64,
    pub pseudo_label_accuracy: Option<f64>,
}

impl EventStats {
    pub fn ratio(&self) -> f64 {
        self.imbalance_ratio.unwrap_or(f64::INFINITY)
    }
}

/// Events whose imbalance ratio exceeds this are reported separately.
pub const IMBALANCE_REPORT_RATIO: f64 = 8.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptationReport {
    pub config: AdaptConfig,
    pub batches: Vec<BatchStats>,
    pub records: Vec<RecordOutcome>,
    pub metrics: Option<Metrics>,
    pub pseudo_label_metrics: Option<Metrics>,
    pub events: Vec<EventStats>,
}

impl AdaptationReport {
    pub fn predictions(&self) -> Vec<Class> {
        self.records.iter().map(|r| r.prediction).collect()
    }

    pub fn imbalanced_events(&self) -> impl Iterator<Item = &EventStats> {
        self.events
            .iter()
            .filter(|e| e.ratio() > IMBALANCE_REPORT_RATIO)
    }
}

fn resolve_batches<'d>(target: &'d Dataset, plan: &BatchPlan) -> Result<Vec<Vec<&'d VideoRecord>>> {
    let index: HashMap<&str, usize> = target
        .records()
        .iter()
        .enumerate()
        .map(|(i, r)| (r.id.as_str(), i))
        .collect();
    let mut seen = vec![false; target.len()];
    let mut out = Vec::with_capacity(plan.batches.len());
    for batch in &plan.batches {
        let mut recs = Vec::with_capacity(batch.len());
        for id in batch {
            let &i = index.get(id.as_str()).ok_or_else(|| {
                RadarError::invalid(format!("batch plan names unknown record {id}"))
            })?;
            if std::mem::replace(&mut seen[i], true) {
                return Err(RadarError::invalid(format!(
                    "batch plan lists record {id} twice"
                )));
            }
            recs.push(&target.records()[i]);
        }
        out.push(recs);
    }
    if let Some(i) = seen.iter().position(|s| !s) {
        return Err(RadarError::invalid(format!(
            "batch plan does not cover record {}",
            target.records()[i].id
        )));
    }
    Ok(out)
}

/// Adapts `model` in place over the plan with the standard adaptable mask.
pub fn adapt_stream(
    model: &mut ModelParams,
    target: &Dataset,
    plan: &BatchPlan,
    config: &AdaptConfig,
) -> Result<AdaptationReport> {
    let mask = AdaptableMask::standard(model);
    adapt_stream_with_mask(model, &mask, target, plan, config)
}

pub fn adapt_stream_with_mask(
    model: &mut ModelParams,
    mask: &AdaptableMask,
    target: &Dataset,
    plan: &BatchPlan,
    config: &AdaptConfig,
) -> Result<AdaptationReport> {
    config.validate()?;
    if target.role() != Role::Target {
        return Err(RadarError::invalid("adaptation requires a target dataset"));
    }
    if target.dims() != model.config.input_dims {
        return Err(RadarError::invalid(format!(
            "target dims {} do not match model input dims {}",
            target.dims(),
            model.config.input_dims
        )));
    }
    let batches = resolve_batches(target, plan)?;
    let components = config.components();
    let retrieval = config.retrieval_params();
    let mut bank = MemoryBank::new(config.capacity(), target.dims())?;
    let mut opt = Adam::new(config.optimizer());
    let mut stats = Vec::with_capacity(batches.len());
    let mut outcomes = Vec::with_capacity(target.len());

    for (b, batch) in batches.iter().enumerate() {
        bank.insert_batch(batch)?;

        // One snapshot of the current parameters serves retrieval
        // entropies, anchors, pseudo-labels and the loss.
        let snapshot: HashMap<u64, ForwardTrace> = if components.retrieval.is_some() {
            bank.scan()
                .map(|e| forward(model, e.record).map(|t| (e.seq, t)))
                .collect::<Result<_>>()?
        } else {
            HashMap::new()
        };
        let traces = batch
            .iter()
            .map(|r| forward(model, r))
            .collect::<Result<Vec<_>>>()?;
        let pre_entropy: Vec<f64> = traces.iter().map(|t| entropy_unchecked(&t.probs)).collect();

        let ref_sets: Vec<Option<ReferenceSet<'_>>> = match components.retrieval {
            Some(_) => batch
                .iter()
                .map(|q| {
                    retrieve_with(&bank, q, &retrieval, |e| {
                        Ok(entropy_unchecked(&snapshot[&e.seq].probs))
                    })
                    .map(Some)
                })
                .collect::<Result<_>>()?,
            None => vec![None; batch.len()],
        };

        let mut pseudo = Vec::with_capacity(batch.len());
        let mut targets = Vec::with_capacity(batch.len());
        for (i, q) in batch.iter().enumerate() {
            let refs = ref_sets[i].clone().unwrap_or_else(|| ReferenceSet {
                query_id: q.id.clone(),
                refs: Vec::new(),
            });
            if components.self_train {
                let pl = if components.self_label_only {
                    let empty = ReferenceSet {
                        query_id: q.id.clone(),
                        refs: Vec::new(),
                    };
                    pseudo_label_from(&traces[i], &empty, &[], config.alpha, config.beta)?
                } else {
                    let probs: Vec<&[f64]> = refs
                        .refs
                        .iter()
                        .map(|r| snapshot[&r.seq].probs.as_slice())
                        .collect();
                    pseudo_label_from(&traces[i], &refs, &probs, config.alpha, config.beta)?
                };
                pseudo.push(Some(pl));
            } else {
                pseudo.push(None);
            }
            if components.align && !refs.is_empty() {
                let outputs: Vec<&Encodings> = refs
                    .refs
                    .iter()
                    .map(|r| &snapshot[&r.seq].encoder_outputs)
                    .collect();
                let target = if components.mse_align {
                    AlignTarget::MeanSquared(reference_mean(&outputs)?)
                } else {
                    let entropies: Vec<f64> = refs.refs.iter().map(|r| r.entropy).collect();
                    AlignTarget::Anchors(anchors_from(&entropies, &outputs)?)
                };
                targets.push(Some(target));
            } else {
                targets.push(None);
            }
        }

        let spec = LossSpec {
            entropy: true,
            self_train: components.self_train.then(|| {
                pseudo
                    .iter()
                    .map(|p| p.as_ref().expect("pseudo-label present").label)
                    .collect()
            }),
            supervised: None,
            align: components.align.then(|| AlignSpec {
                gamma: config.gamma,
                targets,
            }),
        };
        let (loss, grads) = loss_and_gradients(model, mask, &traces, &spec)?;

        if config.reset_optimizer_per_batch {
            opt.reset();
        }
        opt.step(model, mask, &grads)?;
        if let Some(tensor) = model.first_non_finite() {
            return Err(RadarError::AdaptationDiverged { batch: b, tensor });
        }

        let losses = LossComponents {
            align: loss.align,
            self_train: loss.self_train,
            entropy: loss.entropy,
        };
        stats.push(BatchStats {
            index: b,
            size: batch.len(),
            losses,
            total: total_loss(&losses, if components.align { config.gamma } else { 0.0 })?,
            covered: loss.covered,
            clamped: loss.clamped,
            grad_norm: grads.norm(),
            bank_ids: bank.ids().into_iter().map(str::to_owned).collect(),
        });

        for (i, q) in batch.iter().enumerate() {
            let after = forward(model, q)?;
            let pos = target
                .position(&q.id)
                .expect("record comes from the target");
            outcomes.push(RecordOutcome {
                id: q.id.clone(),
                event_id: q.event_id.clone(),
                batch: b,
                prediction: after.prediction(),
                post_entropy: entropy_unchecked(&after.probs),
                probs: after.probs,
                pre_entropy: pre_entropy[i],
                pseudo: pseudo[i].take(),
                references: ref_sets[i].as_ref().map_or(0, ReferenceSet::len),
                label: target.evaluation_label(pos),
            });
        }
    }

    let mut report = AdaptationReport {
        config: config.clone(),
        batches: stats,
        records: outcomes,
        metrics: None,
        pseudo_label_metrics: None,
        events: Vec::new(),
    };
    summarize(&mut report)?;
    Ok(report)
}

/// Fills aggregate and per-event metrics from the record outcomes.
pub(crate) fn summarize(report: &mut AdaptationReport) -> Result<()> {
    let labeled: Option<Vec<Class>> = report.records.iter().map(|r| r.label).collect();
    if let Some(labels) = labeled.filter(|l| !l.is_empty()) {
        report.metrics = Some(macro_metrics(&report.predictions(), &labels)?);
        let pairs: Vec<(Class, Class)> = report
            .records
            .iter()
            .zip(&labels)
            .filter_map(|(r, &y)| r.pseudo.as_ref().map(|p| (p.label, y)))
            .collect();
        if !pairs.is_empty() {
            let (p, y): (Vec<Class>, Vec<Class>) = pairs.into_iter().unzip();
            report.pseudo_label_metrics = Some(macro_metrics(&p, &y)?);
        }
    }

    let mut events: BTreeMap<&str, Vec<&RecordOutcome>> = BTreeMap::new();
    for r in &report.records {
        events.entry(r.event_id.as_str()).or_default().push(r);
    }
    report.events = events
        .into_iter()
        .filter_map(|(event_id, recs)| {
            let labels: Option<Vec<Class>> = recs.iter().map(|r| r.label).collect();
            let labels = labels?;
            let mut class_counts = [0usize; NUM_CLASSES];
            for &y in &labels {
                class_counts[y] += 1;
            }
            let (max, min) = (
                class_counts.iter().max().copied()?,
                class_counts.iter().min().copied()?,
            );
            let correct = recs
                .iter()
                .zip(&labels)
                .filter(|(r, &y)| r.prediction == y)
                .count();
            let with_pseudo: Vec<bool> = recs
                .iter()
                .zip(&labels)
                .filter_map(|(r, &y)| r.pseudo.as_ref().map(|p| p.label == y))
                .collect();
            Some(EventStats {
                event_id: event_id.to_string(),
                count: recs.len(),
                class_counts,
                imbalance_ratio: (min > 0).then(|| max as f64 / min as f64),
                accuracy: correct as f64 / recs.len() as f64,
                pseudo_label_accuracy: (!with_pseudo.is_empty()).then(|| {
                    with_pseudo.iter().filter(|&&c| c).count() as f64 / with_pseudo.len() as f64
                }),
            })
        })
        .collect();
    Ok(())
}

/// Predictions of the unadapted model on every record, in dataset order.
pub fn frozen_predictions(
    model: &ModelParams,
    dataset: &Dataset,
) -> Result<Vec<(Class, Vec<f64>)>> {
    dataset
        .records()
        .iter()
        .map(|r| forward(model, r).map(|t| (t.prediction(), t.probs)))
        .collect()
}

/// Metrics of the unadapted model against the evaluation labels.
pub fn frozen_metrics(model: &ModelParams, dataset: &Dataset) -> Result<Metrics> {
    let labels = dataset.evaluation_labels().ok_or_else(|| {
        RadarError::invalid("frozen-source metrics need evaluation labels on every record")
    })?;
    let preds: Vec<Class> = frozen_predictions(model, dataset)?
        .into_iter()
        .map(|(c, _)| c)
        .collect();
    macro_metrics(&preds, &labels)
}
