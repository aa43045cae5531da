use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by estimation, bounds, and data handling.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected} features, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("sample is empty")]
    EmptySample,

    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },

    #[error("numerical inconsistency: squared norm {value:e} is below tolerance {tol:e}")]
    NumericalInconsistency { value: f64, tol: f64 },

    #[error(
        "degenerate embedding: positive and unlabeled mean maps indistinguishable \
         (squared distance {squared_distance:e})"
    )]
    DegenerateEmbedding { squared_distance: f64 },

    #[error("invalid delta {delta}: must lie in (0, {max:.6}]")]
    InvalidDelta { delta: f64, max: f64 },

    #[error("insufficient sample size: N = {n} but at least {required} is needed")]
    InsufficientSample { n: usize, required: usize },

    #[error("prior plug-in failed: {0}")]
    PluginFailure(String),

    #[error("{path}: line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("{path}: column '{column}' not found; available columns: {available:?}")]
    MissingColumn {
        path: PathBuf,
        column: String,
        available: Vec<String>,
    },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
