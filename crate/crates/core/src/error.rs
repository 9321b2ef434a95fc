use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid activation parameters: {0}")]
    InvalidActivation(String),

    #[error("non-finite input {value} to {op}")]
    NonFinite { op: &'static str, value: f64 },

    #[error("invalid shape: {0}")]
    InvalidShape(String),

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("dimension mismatch at layer {layer}: expected {expected:?}, found {found:?}")]
    DimensionMismatch {
        layer: usize,
        expected: (usize, usize),
        found: (usize, usize),
    },

    #[error("layer index {layer} out of range 1..={depth}")]
    LayerOutOfRange { layer: usize, depth: usize },

    #[error("singular value decomposition failed for {0}")]
    SvdFailure(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("memory budget exceeded: {required} entries requested, limit is {limit}")]
    BudgetExceeded { required: u128, limit: u128 },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
