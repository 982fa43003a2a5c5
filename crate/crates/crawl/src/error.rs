use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CrawlError {
    #[error("empty seed list")]
    EmptySeeds,
    #[error("frontier exhausted")]
    Exhausted,
    #[error("invalid world: {0}")]
    InvalidWorld(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

impl CrawlError {
    pub(crate) fn io(path: &Path, e: std::io::Error) -> Self {
        CrawlError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        }
    }
}

pub type Result<T> = std::result::Result<T, CrawlError>;
