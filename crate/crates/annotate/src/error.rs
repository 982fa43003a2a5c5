use thiserror::Error;

#[derive(Debug, Error)]
pub enum AnnotateError {
    #[error("{field}: {message}")]
    Validation { field: String, message: String },

    #[error("{0}")]
    NotFound(String),

    #[error("{0}")]
    Conflict(String),

    #[error("{0}")]
    BadRequest(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("{path}: {message}")]
    Io { path: String, message: String },

    #[error(transparent)]
    Core(#[from] quadfuse_core::Error),
}

impl AnnotateError {
    pub fn io(path: impl AsRef<std::path::Path>, e: std::io::Error) -> Self {
        AnnotateError::Io {
            path: path.as_ref().display().to_string(),
            message: e.to_string(),
        }
    }
}

pub type Result<T> = std::result::Result<T, AnnotateError>;
