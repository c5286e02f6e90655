//! Feature streams: the record and dataset types, the line-record file
//! format, the synthetic two-domain generator and the batch planners.

mod format;
mod plan;
mod synth;

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{RadarError, Result};

pub use format::{load_dataset, read_dataset, save_dataset, write_dataset};
pub use plan::{plan_eventwise_batches, plan_random_batches, BatchMode, BatchPlan};
pub use synth::{generate_synthetic, SynthSpec};

/// Class index. Only two classes exist.
pub type Class = usize;
pub const REAL: Class = 0;
pub const FAKE: Class = 1;
pub const NUM_CLASSES: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Modality {
    Vision,
    Text,
    Audio,
}

impl Modality {
    pub const ALL: [Modality; 3] = [Modality::Vision, Modality::Text, Modality::Audio];

    pub fn index(self) -> usize {
        match self {
            Modality::Vision => 0,
            Modality::Text => 1,
            Modality::Audio => 2,
        }
    }

    /// Field name used in files and tensor names.
    pub fn key(self) -> &'static str {
        match self {
            Modality::Vision => "v",
            Modality::Text => "t",
            Modality::Audio => "a",
        }
    }
}

/// Per-modality input dimensions `(D_v, D_t, D_a)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModalityDims(pub [usize; 3]);

impl ModalityDims {
    pub fn uniform(d: usize) -> Self {
        ModalityDims([d; 3])
    }

    pub fn get(&self, m: Modality) -> usize {
        self.0[m.index()]
    }
}

impl Default for ModalityDims {
    fn default() -> Self {
        ModalityDims::uniform(768)
    }
}

impl fmt::Display for ModalityDims {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}", self.0[0], self.0[1], self.0[2])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Source,
    Target,
}

impl std::str::FromStr for Role {
    type Err = RadarError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "source" => Ok(Role::Source),
            "target" => Ok(Role::Target),
            other => Err(RadarError::invalid(format!(
                "unknown role {other:?} (expected source or target)"
            ))),
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::Source => "source",
            Role::Target => "target",
        })
    }
}

/// One news video: three pooled feature vectors plus identity.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoRecord {
    pub id: String,
    pub event_id: String,
    pub arrival_index: u64,
    pub features: [Vec<f64>; 3],
    label: Option<Class>,
}

impl VideoRecord {
    pub fn new(
        id: impl Into<String>,
        event_id: impl Into<String>,
        arrival_index: u64,
        v: Vec<f64>,
        t: Vec<f64>,
        a: Vec<f64>,
        label: Option<Class>,
    ) -> Self {
        VideoRecord {
            id: id.into(),
            event_id: event_id.into(),
            arrival_index,
            features: [v, t, a],
            label,
        }
    }

    pub fn modality(&self, m: Modality) -> &[f64] {
        &self.features[m.index()]
    }

    /// Label visible to supervised code. Always `None` for records held by a
    /// target dataset; their labels live behind [`Dataset::evaluation_label`].
    pub fn label(&self) -> Option<Class> {
        self.label
    }

    pub fn dims(&self) -> ModalityDims {
        ModalityDims([
            self.features[0].len(),
            self.features[1].len(),
            self.features[2].len(),
        ])
    }

    /// Checks dimensions, finiteness, non-zero vectors and label range.
    pub fn validate(
        &self,
        dims: ModalityDims,
    ) -> std::result::Result<(), (Option<&'static str>, String)> {
        for m in Modality::ALL {
            let x = self.modality(m);
            if x.len() != dims.get(m) {
                return Err((
                    Some(m.key()),
                    format!("length {} does not match expected {}", x.len(), dims.get(m)),
                ));
            }
            if let Some(pos) = x.iter().position(|v| !v.is_finite()) {
                return Err((Some(m.key()), format!("non-finite value at position {pos}")));
            }
            if x.iter().all(|&v| v == 0.0) {
                return Err((Some(m.key()), "vector is all zeros".into()));
            }
        }
        if let Some(y) = self.label {
            if y >= NUM_CLASSES {
                return Err((Some("label"), format!("label {y} is not 0 or 1")));
            }
        }
        Ok(())
    }
}

/// An ordered, validated, immutable stream of records.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    records: Vec<VideoRecord>,
    role: Role,
    dims: ModalityDims,
    // Target labels, moved out of the records so adaptation never sees them.
    evaluation_labels: Vec<Option<Class>>,
}

impl Dataset {
    /// Builds a dataset, validating every record. Target-role labels are
    /// quarantined.
    pub fn new(records: Vec<VideoRecord>, role: Role, dims: ModalityDims) -> Result<Self> {
        let mut seen = HashSet::with_capacity(records.len());
        let mut prev: Option<u64> = None;
        for r in &records {
            r.validate(dims)
                .map_err(|(field, msg)| RadarError::InvalidRecord {
                    id: r.id.clone(),
                    message: match field {
                        Some(f) => format!("field {f}: {msg}"),
                        None => msg,
                    },
                })?;
            if !seen.insert(r.id.as_str()) {
                return Err(RadarError::InvalidRecord {
                    id: r.id.clone(),
                    message: "duplicate id".into(),
                });
            }
            if prev.is_some_and(|p| r.arrival_index <= p) {
                return Err(RadarError::InvalidRecord {
                    id: r.id.clone(),
                    message: "arrival_index is not strictly increasing".into(),
                });
            }
            prev = Some(r.arrival_index);
            if role == Role::Source && r.label.is_none() {
                return Err(RadarError::InvalidRecord {
                    id: r.id.clone(),
                    message: "source record has no label".into(),
                });
            }
        }
        Ok(Self::assemble(records, role, dims))
    }

    fn assemble(mut records: Vec<VideoRecord>, role: Role, dims: ModalityDims) -> Self {
        let evaluation_labels = match role {
            Role::Source => Vec::new(),
            Role::Target => records.iter_mut().map(|r| r.label.take()).collect(),
        };
        Dataset {
            records,
            role,
            dims,
            evaluation_labels,
        }
    }

    pub fn records(&self) -> &[VideoRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn dims(&self) -> ModalityDims {
        self.dims
    }

    /// Ground-truth label of record `index`, for metric computation only.
    pub fn evaluation_label(&self, index: usize) -> Option<Class> {
        match self.role {
            Role::Source => self.records.get(index).and_then(|r| r.label),
            Role::Target => self.evaluation_labels.get(index).copied().flatten(),
        }
    }

    /// All ground-truth labels, if every record carries one.
    pub fn evaluation_labels(&self) -> Option<Vec<Class>> {
        (0..self.len()).map(|i| self.evaluation_label(i)).collect()
    }

    /// Records with their labels restored, for serialization.
    pub(crate) fn records_with_labels(
        &self,
    ) -> impl Iterator<Item = (&VideoRecord, Option<Class>)> {
        self.records
            .iter()
            .enumerate()
            .map(move |(i, r)| (r, self.evaluation_label(i)))
    }

    /// Index of a record by id.
    pub fn position(&self, id: &str) -> Option<usize> {
        self.records.iter().position(|r| r.id == id)
    }

    /// A new dataset holding the records at `indices`, in that order, with
    /// arrival indices preserved. Fails if `indices` are not increasing.
    pub fn subset(&self, indices: &[usize]) -> Result<Dataset> {
        let mut records = Vec::with_capacity(indices.len());
        for &i in indices {
            let r = self
                .records
                .get(i)
                .ok_or_else(|| RadarError::invalid(format!("subset index {i} out of range")))?;
            let mut r = r.clone();
            r.label = self.evaluation_label(i);
            records.push(r);
        }
        Dataset::new(records, self.role, self.dims)
    }
}
