use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = RadarError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum RadarError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A dataset file line that failed to parse or validate. `line` is 1-based.
    #[error("line {line}{}: {message}", field.as_ref().map(|f| format!(", field {f}")).unwrap_or_default())]
    Format {
        line: usize,
        field: Option<String>,
        message: String,
    },

    #[error("invalid record {id}: {message}")]
    InvalidRecord { id: String, message: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: String,
        expected: usize,
        actual: usize,
    },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("zero-norm vector in {0}")]
    ZeroVector(String),

    #[error("training diverged at epoch {epoch}: loss {loss}")]
    Diverged { epoch: usize, loss: f64 },

    #[error("adaptation diverged at batch {batch}: {tensor} became non-finite")]
    AdaptationDiverged { batch: usize, tensor: String },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("report: {0}")]
    Report(String),
}

impl RadarError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        RadarError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(line: usize, field: Option<&str>, message: impl Into<String>) -> Self {
        RadarError::Format {
            line,
            field: field.map(str::to_owned),
            message: message.into(),
        }
    }

    pub(crate) fn invalid(message: impl Into<String>) -> Self {
        RadarError::InvalidArgument(message.into())
    }

    /// Short stable identifier used in machine-readable error lines.
    pub fn kind(&self) -> &'static str {
        match self {
            RadarError::Io { .. } => "io",
            RadarError::Format { .. } => "format",
            RadarError::InvalidRecord { .. } => "invalid_record",
            RadarError::InvalidArgument(_) => "invalid_argument",
            RadarError::DimensionMismatch { .. } => "dimension_mismatch",
            RadarError::NonFinite(_) => "non_finite",
            RadarError::ZeroVector(_) => "zero_vector",
            RadarError::Diverged { .. } => "diverged",
            RadarError::AdaptationDiverged { .. } => "adaptation_diverged",
            RadarError::Checkpoint(_) => "checkpoint",
            RadarError::Report(_) => "report",
        }
    }
}
