use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("patch at ({row}, {col}) with side {side} exceeds {width}x{height} image")]
    OutOfBounds {
        row: usize,
        col: usize,
        side: usize,
        width: usize,
        height: usize,
    },

    #[error("search window holds {available} candidate patches, group needs {required}")]
    InsufficientCandidates { available: usize, required: usize },

    #[error("pixel ({row}, {col}) is not covered by any group")]
    Uncovered { row: usize, col: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    Dimension { expected: usize, actual: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("malformed {kind} file: {reason}")]
    Format { kind: &'static str, reason: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
