//! Reference-augmented pseudo-labels and the self-training loss.

use serde::{Deserialize, Serialize};

use crate::error::{RadarError, Result};
use crate::feature_io::Class;
use crate::retrieval::ReferenceSet;
use crate::source_model::tensor::softmax;
use crate::source_model::{argmax, cross_entropy, forward, ForwardTrace, ModelParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PseudoLabel {
    pub query_id: String,
    pub combined_scores: Vec<f64>,
    pub label: Class,
    pub used_references: usize,
    pub alpha: f64,
    pub beta: f64,
}

fn check_weights(alpha: f64, beta: f64) -> Result<()> {
    if !(alpha >= 0.0 && beta >= 0.0 && alpha.is_finite() && beta.is_finite()) {
        return Err(RadarError::invalid(format!(
            "pseudo-label weights must be finite and non-negative (alpha {alpha}, beta {beta})"
        )));
    }
    Ok(())
}

/// Combines the query probabilities with reference probabilities weighted
/// by `softmax(sims)`. With no references only `alpha * query` remains.
pub fn combine_scores(
    query_id: &str,
    query: &[f64],
    ref_probs: &[&[f64]],
    sims: &[f64],
    alpha: f64,
    beta: f64,
) -> Result<PseudoLabel> {
    check_weights(alpha, beta)?;
    if ref_probs.len() != sims.len() {
        return Err(RadarError::invalid("one similarity per reference required"));
    }
    let mut scores: Vec<f64> = query.iter().map(|p| alpha * p).collect();
    if !sims.is_empty() {
        let w = softmax(sims);
        for (wi, p) in w.iter().zip(ref_probs) {
            if p.len() != query.len() {
                return Err(RadarError::DimensionMismatch {
                    context: "reference probabilities".into(),
                    expected: query.len(),
                    actual: p.len(),
                });
            }
            for (s, pc) in scores.iter_mut().zip(p.iter()) {
                *s += beta * wi * pc;
            }
        }
    }
    Ok(PseudoLabel {
        query_id: query_id.to_string(),
        label: argmax(&scores),
        combined_scores: scores,
        used_references: sims.len(),
        alpha,
        beta,
    })
}

/// Pseudo-label of a query with reference probabilities already computed
/// under the current parameters.
pub fn pseudo_label_from(
    query_trace: &ForwardTrace,
    refs: &ReferenceSet<'_>,
    ref_probs: &[&[f64]],
    alpha: f64,
    beta: f64,
) -> Result<PseudoLabel> {
    let sims: Vec<f64> = refs.refs.iter().map(|r| r.sim_total).collect();
    combine_scores(
        &refs.query_id,
        &query_trace.probs,
        ref_probs,
        &sims,
        alpha,
        beta,
    )
}

/// Runs the current model on every reference and combines.
pub fn make_pseudo_label(
    query_trace: &ForwardTrace,
    refs: &ReferenceSet<'_>,
    params: &ModelParams,
    alpha: f64,
    beta: f64,
) -> Result<PseudoLabel> {
    let traces = refs
        .refs
        .iter()
        .map(|r| forward(params, r.record))
        .collect::<Result<Vec<_>>>()?;
    let probs: Vec<&[f64]> = traces.iter().map(|t| t.probs.as_slice()).collect();
    pseudo_label_from(query_trace, refs, &probs, alpha, beta)
}

/// `-ln p[label]` of the query, clamped; the flag reports clamping.
pub fn self_training_loss(query_trace: &ForwardTrace, pseudo: &PseudoLabel) -> (f64, bool) {
    cross_entropy(&query_trace.probs, pseudo.label)
}
