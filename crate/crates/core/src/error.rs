use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch at layer {layer}: expected {expected} columns, got {actual}")]
    LayerDimension {
        layer: usize,
        expected: usize,
        actual: usize,
    },

    #[error("shape mismatch in {context}: {left:?} vs {right:?}")]
    Shape {
        context: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("stale activation cache: {0}")]
    StaleCache(String),

    #[error("target row {row} is not one-hot")]
    NotOneHot { row: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("alpha must lie in [0, 1], got {0}")]
    AlphaOutOfRange(f64),

    #[error("rule {rule_id}: unknown concept '{concept}'")]
    UnknownConcept { rule_id: String, concept: String },

    #[error("duplicate rule id '{0}'")]
    DuplicateRule(String),

    #[error("rule {0} maps to no concepts")]
    EmptyConceptList(String),

    #[error("unknown rule id '{0}'")]
    UnknownRule(String),

    #[error("invalid taxonomy: {0}")]
    Taxonomy(String),

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("stratum '{stratum}' has {available} rows, batch needs {needed}")]
    StratumExhausted {
        stratum: String,
        available: usize,
        needed: usize,
    },

    #[error("no negative examples to calibrate a threshold")]
    NoNegatives,

    #[error("no positive examples to measure recall")]
    NoPositives,

    #[error("every concept lacks positive labels; mAP is undefined")]
    AllConceptsExcluded,

    #[error("calibration infeasible: {what} (realized {realized})")]
    Calibration { what: String, realized: f64 },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl ToString, line: usize, message: impl ToString) -> Self {
        Error::Parse {
            path: path.to_string(),
            line,
            message: message.to_string(),
        }
    }
}
