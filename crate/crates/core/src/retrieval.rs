//! Stable reference retrieval: Top-K by summed per-modality cosine
//! similarity over the bank, then an entropy filter under the current
//! model.

use std::cmp::Ordering;

use crate::error::{RadarError, Result};
use crate::feature_io::{Modality, VideoRecord};
use crate::memory_bank::{BankEntry, MemoryBank};
use crate::source_model::tensor::{dot, norm};
use crate::source_model::{entropy_unchecked, forward, ModelParams};

/// Cosine similarity of two non-zero vectors.
pub fn modality_sim(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(RadarError::DimensionMismatch {
            context: "cosine similarity".into(),
            expected: x.len(),
            actual: y.len(),
        });
    }
    let (nx, ny) = (norm(x), norm(y));
    if nx == 0.0 || ny == 0.0 {
        return Err(RadarError::ZeroVector("cosine similarity operand".into()));
    }
    Ok((dot(x, y) / (nx * ny)).clamp(-1.0, 1.0))
}

/// Sum of the three modality similarities, in `[-3, 3]`.
pub fn total_sim(q: &VideoRecord, c: &VideoRecord) -> Result<f64> {
    let mut s = 0.0;
    for m in Modality::ALL {
        s += modality_sim(q.modality(m), c.modality(m))?;
    }
    Ok(s)
}

#[derive(Debug, Clone, Copy)]
pub struct Reference<'a> {
    pub record: &'a VideoRecord,
    pub seq: u64,
    pub sim_total: f64,
    pub entropy: f64,
}

/// Stable references of one query, sorted by similarity, highest first.
#[derive(Debug, Clone)]
pub struct ReferenceSet<'a> {
    pub query_id: String,
    pub refs: Vec<Reference<'a>>,
}

impl ReferenceSet<'_> {
    pub fn len(&self) -> usize {
        self.refs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.refs.is_empty()
    }
}

/// How candidates are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RetrievalMode {
    /// Top-K by similarity, then keep entropy below the threshold.
    #[default]
    SimilarityThenEntropy,
    /// Top-K by similarity with no entropy filter.
    SimilarityOnly,
    /// The K lowest-entropy entries below the threshold, ignoring
    /// similarity for selection.
    EntropyOnly,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetrievalParams {
    pub k: usize,
    pub entropy_threshold: f64,
    pub mode: RetrievalMode,
}

impl RetrievalParams {
    pub fn new(k: usize, entropy_threshold: f64) -> Self {
        RetrievalParams {
            k,
            entropy_threshold,
            mode: RetrievalMode::SimilarityThenEntropy,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(RadarError::invalid("retrieval K must be at least 1"));
        }
        let max = std::f64::consts::LN_2;
        if !(self.entropy_threshold > 0.0 && self.entropy_threshold <= max + 1e-12) {
            return Err(RadarError::invalid(format!(
                "entropy threshold {} must lie in (0, ln 2]",
                self.entropy_threshold
            )));
        }
        Ok(())
    }
}

/// Similarity descending, then older insertion, then id.
fn by_similarity(a: &Reference<'_>, b: &Reference<'_>) -> Ordering {
    b.sim_total
        .total_cmp(&a.sim_total)
        .then(a.seq.cmp(&b.seq))
        .then_with(|| a.record.id.cmp(&b.record.id))
}

fn by_entropy(a: &Reference<'_>, b: &Reference<'_>) -> Ordering {
    a.entropy
        .total_cmp(&b.entropy)
        .then(a.seq.cmp(&b.seq))
        .then_with(|| a.record.id.cmp(&b.record.id))
}

/// Retrieval against a bank snapshot with a caller-supplied entropy for
/// each entry (computed under the current parameters).
pub fn retrieve_with<'a>(
    bank: &MemoryBank<'a>,
    query: &VideoRecord,
    params: &RetrievalParams,
    mut entropy_of: impl FnMut(&BankEntry<'a>) -> Result<f64>,
) -> Result<ReferenceSet<'a>> {
    params.validate()?;
    let mut candidates = Vec::with_capacity(bank.len());
    for entry in bank.scan() {
        if entry.record.id == query.id {
            continue;
        }
        candidates.push(Reference {
            record: entry.record,
            seq: entry.seq,
            sim_total: total_sim(query, entry.record)?,
            entropy: f64::NAN,
        });
    }
    let entries: Vec<BankEntry<'a>> = bank.scan().copied().collect();
    let lookup = |r: &Reference<'a>| -> BankEntry<'a> {
        *entries
            .iter()
            .find(|e| e.seq == r.seq)
            .expect("candidate comes from the bank")
    };

    let threshold = params.entropy_threshold;
    let mut refs = match params.mode {
        RetrievalMode::SimilarityThenEntropy | RetrievalMode::SimilarityOnly => {
            candidates.sort_by(by_similarity);
            candidates.truncate(params.k);
            for c in &mut candidates {
                c.entropy = entropy_of(&lookup(c))?;
            }
            if params.mode == RetrievalMode::SimilarityThenEntropy {
                candidates.retain(|c| c.entropy < threshold);
            }
            candidates
        }
        RetrievalMode::EntropyOnly => {
            for c in &mut candidates {
                c.entropy = entropy_of(&lookup(c))?;
            }
            candidates.retain(|c| c.entropy < threshold);
            candidates.sort_by(by_entropy);
            candidates.truncate(params.k);
            candidates
        }
    };
    refs.sort_by(by_similarity);
    Ok(ReferenceSet {
        query_id: query.id.clone(),
        refs,
    })
}

/// Retrieves the stable references of `query`, evaluating candidate
/// entropies with `model`.
pub fn retrieve<'a>(
    bank: &MemoryBank<'a>,
    query: &VideoRecord,
    k: usize,
    entropy_threshold: f64,
    model: &ModelParams,
) -> Result<ReferenceSet<'a>> {
    let params = RetrievalParams::new(k, entropy_threshold);
    retrieve_with(bank, query, &params, |e| {
        forward(model, e.record).map(|t| entropy_unchecked(&t.probs))
    })
}
