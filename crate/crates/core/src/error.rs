use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("all-zero input: {0} is undefined when every entry is zero")]
    AllZero(&'static str),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("dimension mismatch: {what} (expected {expected}, got {actual})")]
    Dimension {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("{experts} experts cannot be split evenly over {ranks} ranks")]
    Divisibility { experts: usize, ranks: usize },

    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("zero variance in {0}; correlation is undefined")]
    ZeroVariance(&'static str),

    #[error("insufficient data for {what}: need at least {needed}, got {got}")]
    Insufficient {
        what: String,
        needed: usize,
        got: usize,
    },

    #[error("{path}:{line}: malformed record: {reason}")]
    Malformed {
        path: PathBuf,
        line: usize,
        reason: String,
    },

    #[error("record (step {step}, layer {layer}): {reason}")]
    InvalidRecord {
        step: u64,
        layer: u32,
        reason: String,
    },

    #[error("invalid trace: {0}")]
    InvalidTrace(String),

    #[error("unknown label {0:?}")]
    UnknownLabel(String),

    #[error("duplicate cell ({architecture}, {condition})")]
    DuplicateCell {
        architecture: String,
        condition: String,
    },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
