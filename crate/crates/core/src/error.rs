use std::path::PathBuf;

use thiserror::Error;

use crate::record::PresenceMask;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty dataset")]
    EmptyDataset,

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid record: {0}")]
    Validation(String),

    #[error("embedding not found: {0}")]
    EmbeddingNotFound(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimMismatch { expected: usize, found: usize },

    #[error("no modality present")]
    NoModality,

    #[error("intolerable missing pattern {0}")]
    IntolerableMask(PresenceMask),

    #[error("degenerate dictionary (condition number {condition:e})")]
    DegenerateDictionary { condition: f64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("empty training set")]
    EmptyTrainSet,

    #[error("bad decision weights: {0}")]
    BadWeights(String),

    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),

    #[error("malformed vector store: {0}")]
    Store(String),

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
