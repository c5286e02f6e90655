//! Stable anchors and the prototype alignment loss.
//!
//! For a query with references `S_1..S_L`, the anchor of modality `m` is
//! `A_m = sum_i w_i f_m(m_i)` with `w = softmax(-Ent(S_i))`. The loss is
//! `sum_m (1 - cos(f_m(m), A_m))`. Anchors are constants in the backward
//! pass.

use crate::error::{RadarError, Result};
use crate::retrieval::ReferenceSet;
use crate::source_model::tensor::{dot, norm};
use crate::source_model::{forward, ForwardTrace, ModelParams};

/// Per-modality encoder outputs of one record.
pub type Encodings = [Vec<f64>; 3];

#[derive(Debug, Clone, PartialEq)]
pub struct AnchorSet {
    pub anchors: Encodings,
    /// Weight of each reference, in reference order.
    pub weights: Vec<f64>,
}

/// What a covered query is pulled toward.
#[derive(Debug, Clone, PartialEq)]
pub enum AlignTarget {
    /// Cosine alignment to entropy-weighted anchors.
    Anchors(AnchorSet),
    /// Squared Euclidean distance to the unweighted reference mean.
    MeanSquared(Encodings),
}

impl AlignTarget {
    pub fn loss(&self, outputs: &Encodings) -> Result<f64> {
        match self {
            AlignTarget::Anchors(a) => cosine_alignment(outputs, a),
            AlignTarget::MeanSquared(mean) => Ok(mean_squared_alignment(outputs, mean)),
        }
    }

    /// Gradient of [`AlignTarget::loss`] with respect to `outputs`.
    pub fn gradient(&self, outputs: &Encodings) -> Result<Encodings> {
        match self {
            AlignTarget::Anchors(a) => cosine_alignment_gradient(outputs, a),
            AlignTarget::MeanSquared(mean) => Ok(std::array::from_fn(|m| {
                outputs[m]
                    .iter()
                    .zip(&mean[m])
                    .map(|(f, a)| 2.0 * (f - a))
                    .collect()
            })),
        }
    }
}

/// `softmax(-entropies)`, shifted by the minimum entropy for stability.
pub fn anchor_weights(entropies: &[f64]) -> Result<Vec<f64>> {
    if entropies.is_empty() {
        return Err(RadarError::invalid(
            "anchor weights need at least one reference",
        ));
    }
    let min = entropies.iter().copied().fold(f64::INFINITY, f64::min);
    let exps: Vec<f64> = entropies.iter().map(|e| (-(e - min)).exp()).collect();
    let total: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / total).collect())
}

/// Anchors from already-computed reference entropies and encoder outputs.
pub fn anchors_from(entropies: &[f64], outputs: &[&Encodings]) -> Result<AnchorSet> {
    if entropies.len() != outputs.len() {
        return Err(RadarError::invalid(
            "one entropy per reference encoding required",
        ));
    }
    let weights = anchor_weights(entropies)?;
    let anchors: Encodings = std::array::from_fn(|m| {
        let d = outputs[0][m].len();
        let mut a = vec![0.0; d];
        for (w, enc) in weights.iter().zip(outputs) {
            for (acc, x) in a.iter_mut().zip(&enc[m]) {
                *acc += w * x;
            }
        }
        a
    });
    if anchors.iter().flatten().any(|x| !x.is_finite()) {
        return Err(RadarError::NonFinite("stable anchor".into()));
    }
    Ok(AnchorSet { anchors, weights })
}

/// Builds anchors for `refs` by running the current model on each
/// reference.
pub fn build_anchors(refs: &ReferenceSet<'_>, params: &ModelParams) -> Result<AnchorSet> {
    if refs.refs.is_empty() {
        return Err(RadarError::invalid(format!(
            "query {} has no references to build anchors from",
            refs.query_id
        )));
    }
    let traces = refs
        .refs
        .iter()
        .map(|r| forward(params, r.record))
        .collect::<Result<Vec<_>>>()?;
    let entropies: Vec<f64> = refs.refs.iter().map(|r| r.entropy).collect();
    let outputs: Vec<&Encodings> = traces.iter().map(|t| &t.encoder_outputs).collect();
    anchors_from(&entropies, &outputs)
}

/// Unweighted per-modality mean of reference encodings.
pub fn reference_mean(outputs: &[&Encodings]) -> Result<Encodings> {
    if outputs.is_empty() {
        return Err(RadarError::invalid(
            "reference mean needs at least one reference",
        ));
    }
    let n = outputs.len() as f64;
    Ok(std::array::from_fn(|m| {
        let d = outputs[0][m].len();
        (0..d)
            .map(|k| outputs.iter().map(|e| e[m][k]).sum::<f64>() / n)
            .collect()
    }))
}

fn check_pair(f: &[f64], a: &[f64], m: usize) -> Result<(f64, f64)> {
    if f.len() != a.len() {
        return Err(RadarError::DimensionMismatch {
            context: format!("alignment modality {m}"),
            expected: a.len(),
            actual: f.len(),
        });
    }
    let (nf, na) = (norm(f), norm(a));
    if nf == 0.0 {
        return Err(RadarError::ZeroVector(format!(
            "encoder output of modality {m}"
        )));
    }
    if na == 0.0 {
        return Err(RadarError::ZeroVector(format!("anchor of modality {m}")));
    }
    Ok((nf, na))
}

pub fn cosine_alignment(outputs: &Encodings, anchors: &AnchorSet) -> Result<f64> {
    let mut loss = 0.0;
    for m in 0..3 {
        let (f, a) = (&outputs[m], &anchors.anchors[m]);
        let (nf, na) = check_pair(f, a, m)?;
        loss += 1.0 - dot(f, a) / (nf * na);
    }
    Ok(loss)
}

/// Alignment loss of a query trace against its anchors.
pub fn alignment_loss(trace: &ForwardTrace, anchors: &AnchorSet) -> Result<f64> {
    cosine_alignment(&trace.encoder_outputs, anchors)
}

fn cosine_alignment_gradient(outputs: &Encodings, anchors: &AnchorSet) -> Result<Encodings> {
    let mut grads: Encodings = Default::default();
    for m in 0..3 {
        let (f, a) = (&outputs[m], &anchors.anchors[m]);
        let (nf, na) = check_pair(f, a, m)?;
        let cos = dot(f, a) / (nf * na);
        // d/df (1 - cos) = -(a / (|f||a|) - cos f / |f|^2)
        grads[m] = f
            .iter()
            .zip(a)
            .map(|(fi, ai)| -(ai / (nf * na) - cos * fi / (nf * nf)))
            .collect();
    }
    Ok(grads)
}

pub fn mean_squared_alignment(outputs: &Encodings, mean: &Encodings) -> f64 {
    (0..3)
        .map(|m| {
            outputs[m]
                .iter()
                .zip(&mean[m])
                .map(|(f, a)| (f - a) * (f - a))
                .sum::<f64>()
        })
        .sum()
}
