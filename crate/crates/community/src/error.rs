use thiserror::Error;

#[derive(Debug, Error)]
pub enum CommunityError {
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("{0}")]
    InvalidArgument(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

pub type Result<T> = std::result::Result<T, CommunityError>;
