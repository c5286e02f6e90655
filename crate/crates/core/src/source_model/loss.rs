//! Prediction entropy, batch objectives and their exact gradients.

use super::backward::{backward, Upstream};
use super::forward::ForwardTrace;
use super::params::{AdaptableMask, ModelParams};
use super::tensor::Tensor;
use crate::alignment::{AlignTarget, Encodings};
use crate::error::{RadarError, Result};
use crate::feature_io::Class;

/// Floor for probabilities under a logarithm in cross-entropy terms.
pub const PROB_FLOOR: f64 = 1e-12;

/// Shannon entropy in nats, with `0 ln 0 = 0`. `p` must lie on the simplex
/// within `1e-6`.
pub fn entropy(p: &[f64]) -> Result<f64> {
    const TOL: f64 = 1e-6;
    if p.is_empty() {
        return Err(RadarError::invalid("entropy of an empty distribution"));
    }
    if let Some(x) = p.iter().find(|&&x| !x.is_finite() || x < -TOL) {
        return Err(RadarError::invalid(format!(
            "probability {x} is negative or non-finite"
        )));
    }
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > TOL {
        return Err(RadarError::invalid(format!(
            "probabilities sum to {total}, not 1"
        )));
    }
    Ok(entropy_unchecked(p))
}

pub(crate) fn entropy_unchecked(p: &[f64]) -> f64 {
    -p.iter()
        .filter(|&&x| x > 0.0)
        .map(|&x| x * x.ln())
        .sum::<f64>()
}

/// `d H(softmax(z)) / dz = -p (ln p + H)`.
fn entropy_logit_grad(p: &[f64]) -> Vec<f64> {
    let h = entropy_unchecked(p);
    p.iter()
        .map(|&pi| if pi > 0.0 { -pi * (pi.ln() + h) } else { 0.0 })
        .collect()
}

/// `-ln max(p_y, floor)` and whether the floor was hit.
pub fn cross_entropy(p: &[f64], label: Class) -> (f64, bool) {
    let py = p[label];
    if py < PROB_FLOOR {
        (-PROB_FLOOR.ln(), true)
    } else {
        (-py.ln(), false)
    }
}

fn cross_entropy_logit_grad(p: &[f64], label: Class) -> Vec<f64> {
    if p[label] < PROB_FLOOR {
        // the clamped branch is constant
        return vec![0.0; p.len()];
    }
    p.iter()
        .enumerate()
        .map(|(c, &pc)| pc - if c == label { 1.0 } else { 0.0 })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlignSpec {
    pub gamma: f64,
    /// One entry per sample; `None` for queries without references.
    pub targets: Vec<Option<AlignTarget>>,
}

/// Which batch objective terms are active, with their per-sample targets.
///
/// The batch loss is `gamma * mean_covered(align) + mean(self_train) +
/// mean(entropy) + mean(supervised)`, where `mean_covered` averages only
/// over samples with an alignment target.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LossSpec {
    pub entropy: bool,
    /// Hard pseudo-labels, one per sample.
    pub self_train: Option<Vec<Class>>,
    /// Ground-truth labels, one per sample.
    pub supervised: Option<Vec<Class>>,
    pub align: Option<AlignSpec>,
}

/// Mean value of each term over a batch.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossBreakdown {
    /// Mean over covered samples, before the `gamma` weight.
    pub align: f64,
    pub covered: usize,
    pub self_train: f64,
    pub entropy: f64,
    pub supervised: f64,
    pub total: f64,
    /// Cross-entropy terms that hit [`PROB_FLOOR`].
    pub clamped: usize,
}

impl LossSpec {
    pub fn entropy_only() -> Self {
        LossSpec {
            entropy: true,
            ..LossSpec::default()
        }
    }

    pub fn supervised(labels: Vec<Class>) -> Self {
        LossSpec {
            supervised: Some(labels),
            ..LossSpec::default()
        }
    }

    fn check_lengths(&self, n: usize) -> Result<()> {
        let lens = [
            self.self_train.as_ref().map(Vec::len),
            self.supervised.as_ref().map(Vec::len),
            self.align.as_ref().map(|a| a.targets.len()),
        ];
        for len in lens.into_iter().flatten() {
            if len != n {
                return Err(RadarError::DimensionMismatch {
                    context: "loss targets per sample".into(),
                    expected: n,
                    actual: len,
                });
            }
        }
        Ok(())
    }

    fn covered(&self) -> usize {
        self.align
            .as_ref()
            .map_or(0, |a| a.targets.iter().filter(|t| t.is_some()).count())
    }

    /// Evaluates every active term on traces computed under one snapshot.
    pub fn evaluate(&self, traces: &[ForwardTrace]) -> Result<LossBreakdown> {
        let n = traces.len();
        self.check_lengths(n)?;
        let mut out = LossBreakdown {
            covered: self.covered(),
            ..LossBreakdown::default()
        };
        if n == 0 {
            return Ok(out);
        }
        let nf = n as f64;
        for (i, tr) in traces.iter().enumerate() {
            if self.entropy {
                out.entropy += entropy_unchecked(&tr.probs) / nf;
            }
            if let Some(labels) = &self.self_train {
                let (v, clamped) = cross_entropy(&tr.probs, labels[i]);
                out.self_train += v / nf;
                out.clamped += clamped as usize;
            }
            if let Some(labels) = &self.supervised {
                let (v, clamped) = cross_entropy(&tr.probs, labels[i]);
                out.supervised += v / nf;
                out.clamped += clamped as usize;
            }
            if let Some(AlignSpec { targets, .. }) = &self.align {
                if let Some(target) = &targets[i] {
                    out.align += target.loss(&tr.encoder_outputs)? / out.covered as f64;
                }
            }
        }
        let gamma = self.align.as_ref().map_or(0.0, |a| a.gamma);
        out.total = gamma * out.align + out.self_train + out.entropy + out.supervised;
        for (name, v) in [
            ("align", out.align),
            ("self_train", out.self_train),
            ("entropy", out.entropy),
            ("supervised", out.supervised),
        ] {
            if !v.is_finite() {
                return Err(RadarError::NonFinite(format!("{name} loss")));
            }
        }
        Ok(out)
    }

    fn upstream(
        &self,
        i: usize,
        trace: &ForwardTrace,
        n: usize,
        covered: usize,
    ) -> Result<Upstream> {
        let nf = n as f64;
        let mut logits = vec![0.0; trace.logits.len()];
        let mut add = |g: Vec<f64>| {
            for (a, b) in logits.iter_mut().zip(g) {
                *a += b / nf;
            }
        };
        if self.entropy {
            add(entropy_logit_grad(&trace.probs));
        }
        if let Some(labels) = &self.self_train {
            add(cross_entropy_logit_grad(&trace.probs, labels[i]));
        }
        if let Some(labels) = &self.supervised {
            add(cross_entropy_logit_grad(&trace.probs, labels[i]));
        }
        let mut encoder_outputs = None;
        if let Some(AlignSpec { gamma, targets }) = &self.align {
            if let Some(target) = &targets[i] {
                let scale = gamma / covered as f64;
                let g: Encodings = target.gradient(&trace.encoder_outputs)?;
                encoder_outputs = Some(g.map(|v| v.into_iter().map(|x| x * scale).collect()));
            }
        }
        Ok(Upstream {
            logits,
            encoder_outputs,
        })
    }
}

/// Gradients for the adaptable tensors only, in canonical order.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    pub entries: Vec<(String, Tensor)>,
}

impl GradientSet {
    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn norm(&self) -> f64 {
        self.entries
            .iter()
            .map(|(_, t)| t.sq_norm())
            .sum::<f64>()
            .sqrt()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

fn check_trace(params: &ModelParams, trace: &ForwardTrace) -> Result<()> {
    let cfg = &params.config;
    let ok = trace.fusion.len() == params.fusion.len()
        && trace
            .encoder_outputs
            .iter()
            .all(|e| e.len() == cfg.encoder_out)
        && trace
            .encoders
            .iter()
            .zip(cfg.input_dims.0)
            .all(|(e, d)| e.input.len() == d)
        && trace.cls_hidden.len() == cfg.classifier_hidden
        && trace.logits.len() == cfg.num_classes;
    if ok {
        Ok(())
    } else {
        Err(RadarError::invalid(
            "forward trace does not match model parameters",
        ))
    }
}

/// Loss values and exact gradients of the mean batch loss with respect to
/// every tensor flagged in `mask`.
pub fn loss_and_gradients(
    params: &ModelParams,
    mask: &AdaptableMask,
    traces: &[ForwardTrace],
    spec: &LossSpec,
) -> Result<(LossBreakdown, GradientSet)> {
    if mask.flags.len() != params.num_tensors() {
        return Err(RadarError::invalid(
            "adaptable mask does not match model parameters",
        ));
    }
    let breakdown = spec.evaluate(traces)?;
    let mut full = ModelParams::zeros(&params.config);
    for (i, tr) in traces.iter().enumerate() {
        check_trace(params, tr)?;
        let up = spec.upstream(i, tr, traces.len(), breakdown.covered)?;
        backward(params, tr, &up, &mut full);
    }
    let mut entries = Vec::with_capacity(mask.count());
    let mut flags = mask.flags.iter();
    full.for_each_mut(|name, t| {
        if *flags.next().expect("mask length checked") {
            entries.push((name, std::mem::replace(t, Tensor::zeros(&[]))));
        }
    });
    Ok((breakdown, GradientSet { entries }))
}

pub fn loss_gradients(
    params: &ModelParams,
    mask: &AdaptableMask,
    traces: &[ForwardTrace],
    spec: &LossSpec,
) -> Result<GradientSet> {
    loss_and_gradients(params, mask, traces, spec).map(|(_, g)| g)
}
