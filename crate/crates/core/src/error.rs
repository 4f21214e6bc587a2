use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid range: lo={lo} > hi={hi}")]
    InvalidRange { lo: f64, hi: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    Dimension { expected: usize, actual: usize },

    #[error("cosine similarity undefined for a zero vector")]
    UndefinedSimilarity,

    #[error("singular system in ridge solve (alpha={alpha})")]
    SingularSystem { alpha: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("degenerate sample: {0}")]
    DegenerateSample(String),

    #[error("schema violation: {0}")]
    Schema(String),

    #[error("variation produced a non-finite value for {variable} (class {class})")]
    VariationDomain { variable: String, class: usize },

    #[error("not applicable: {0}")]
    NotApplicable(String),

    #[error("training diverged: loss is NaN at epoch {epoch}")]
    Divergence { epoch: usize },

    #[error("only {available} jointly-correct instances available, {requested} requested")]
    Shortfall { requested: usize, available: usize },

    #[error("invalid coefficient at index {index}: {value}")]
    InvalidCoefficient { index: usize, value: f64 },

    #[error("incompatible inputs: {detail} (left hash {left}, right hash {right})")]
    Incompatible {
        detail: String,
        left: String,
        right: String,
    },

    #[error("degenerate perturbation: every feature has zero spread")]
    DegeneratePerturbation,

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_)
            | Error::Parse { .. }
            | Error::InvalidRange { .. }
            | Error::Schema(_)
            | Error::Io { .. }
            | Error::Json(_)
            | Error::NotApplicable(_) => 2,
            Error::Incompatible { .. } | Error::Dimension { .. } | Error::Shortfall { .. } => 3,
            _ => 4,
        }
    }
}
