use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{RadarError, Result};
use crate::feature_io::BatchMode;
use crate::retrieval::{RetrievalMode, RetrievalParams};
use crate::source_model::AdamConfig;

/// Variants that switch off or replace one component of the method.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ablation {
    /// Drop the alignment term.
    NoAlign,
    /// Squared distance to the unweighted reference mean instead of cosine
    /// alignment to weighted anchors.
    MseAlign,
    /// Drop the self-training term.
    NoSelfTrain,
    /// Pseudo-labels from the query's own prediction only.
    SelfLabelOnly,
    /// Same as `SimilarityOnly`.
    NoRetrievalEntropyFilter,
    /// Top-K by similarity with no entropy filter.
    SimilarityOnly,
    /// Lowest-entropy bank entries with no similarity ranking.
    EntropyOnly,
    /// Entropy minimization alone.
    PlainEm,
}

impl Ablation {
    pub const ALL: [Ablation; 8] = [
        Ablation::NoAlign,
        Ablation::MseAlign,
        Ablation::NoSelfTrain,
        Ablation::SelfLabelOnly,
        Ablation::NoRetrievalEntropyFilter,
        Ablation::SimilarityOnly,
        Ablation::EntropyOnly,
        Ablation::PlainEm,
    ];

    pub fn key(self) -> &'static str {
        match self {
            Ablation::NoAlign => "no_align",
            Ablation::MseAlign => "mse_align",
            Ablation::NoSelfTrain => "no_self_train",
            Ablation::SelfLabelOnly => "self_label_only",
            Ablation::NoRetrievalEntropyFilter => "no_retrieval_entropy_filter",
            Ablation::SimilarityOnly => "similarity_only",
            Ablation::EntropyOnly => "entropy_only",
            Ablation::PlainEm => "plain_em",
        }
    }
}

impl fmt::Display for Ablation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

impl FromStr for Ablation {
    type Err = RadarError;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().replace('-', "_");
        Ablation::ALL
            .into_iter()
            .find(|a| a.key() == norm)
            .ok_or_else(|| {
                let names: Vec<&str> = Ablation::ALL.iter().map(|a| a.key()).collect();
                RadarError::invalid(format!(
                    "unknown ablation {s:?}; expected one of {}",
                    names.join(", ")
                ))
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdaptConfig {
    /// Retrieval Top-K.
    pub k: usize,
    /// Entropy threshold E_0; references need entropy strictly below it.
    pub entropy_threshold: f64,
    /// Memory bank capacity M; `None` means six batches.
    pub bank_capacity: Option<usize>,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub mode: BatchMode,
    pub batch_size: usize,
    /// Seed of the random batch plan.
    pub seed: u64,
    pub ablations: Vec<Ablation>,
    pub reset_optimizer_per_batch: bool,
}

impl Default for AdaptConfig {
    fn default() -> Self {
        AdaptConfig {
            k: 8,
            entropy_threshold: 0.4,
            bank_capacity: None,
            alpha: 0.5,
            beta: 0.5,
            gamma: 1.0,
            learning_rate: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            mode: BatchMode::EventWise,
            batch_size: 7,
            seed: 0,
            ablations: Vec::new(),
            reset_optimizer_per_batch: false,
        }
    }
}

/// Which loss terms and retrieval variant a configuration resolves to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Components {
    pub retrieval: Option<RetrievalMode>,
    pub align: bool,
    pub mse_align: bool,
    pub self_train: bool,
    pub self_label_only: bool,
}

impl AdaptConfig {
    pub fn with_ablation(mut self, a: Ablation) -> Self {
        if !self.ablations.contains(&a) {
            self.ablations.push(a);
        }
        self
    }

    pub fn has(&self, a: Ablation) -> bool {
        self.ablations.contains(&a)
    }

    pub fn capacity(&self) -> usize {
        self.bank_capacity.unwrap_or(6 * self.batch_size)
    }

    pub fn optimizer(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.adam_eps,
        }
    }

    pub fn retrieval_params(&self) -> RetrievalParams {
        let mut p = RetrievalParams::new(self.k, self.entropy_threshold);
        if let Some(mode) = self.components().retrieval {
            p.mode = mode;
        }
        p
    }

    pub fn components(&self) -> Components {
        if self.has(Ablation::PlainEm) {
            return Components {
                retrieval: None,
                align: false,
                mse_align: false,
                self_train: false,
                self_label_only: false,
            };
        }
        let align = !self.has(Ablation::NoAlign);
        let self_train = !self.has(Ablation::NoSelfTrain);
        let self_label_only = self.has(Ablation::SelfLabelOnly);
        let needs_refs = align || (self_train && !self_label_only);
        let mode = if self.has(Ablation::EntropyOnly) {
            RetrievalMode::EntropyOnly
        } else if self.has(Ablation::SimilarityOnly) || self.has(Ablation::NoRetrievalEntropyFilter)
        {
            RetrievalMode::SimilarityOnly
        } else {
            RetrievalMode::SimilarityThenEntropy
        };
        Components {
            retrieval: needs_refs.then_some(mode),
            align,
            mse_align: self.has(Ablation::MseAlign),
            self_train,
            self_label_only,
        }
    }

    pub fn validate(&self) -> Result<()> {
        RetrievalParams::new(self.k, self.entropy_threshold).validate()?;
        if self.batch_size == 0 {
            return Err(RadarError::invalid("batch_size must be at least 1"));
        }
        if self.capacity() == 0 {
            return Err(RadarError::invalid("bank capacity must be at least 1"));
        }
        for (name, v) in [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("gamma", self.gamma),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(RadarError::invalid(format!(
                    "{name} must be finite and non-negative, got {v}"
                )));
            }
        }
        if self.alpha == 0.0 && self.beta == 0.0 {
            return Err(RadarError::invalid("alpha and beta cannot both be zero"));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(RadarError::invalid(format!(
                "learning_rate must be finite and non-negative, got {}",
                self.learning_rate
            )));
        }
        if self.has(Ablation::EntropyOnly)
            && (self.has(Ablation::SimilarityOnly) || self.has(Ablation::NoRetrievalEntropyFilter))
        {
            return Err(RadarError::invalid(
                "entropy_only cannot be combined with similarity_only",
            ));
        }
        Ok(())
    }
}
