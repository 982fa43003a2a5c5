use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("{0}")]
    Other(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Other(_) => 1,
        }
    }

    pub fn io(path: &std::path::Path, e: std::io::Error) -> Self {
        CliError::Other(format!("{}: {e}", path.display()))
    }
}

impl From<quadfuse_core::Error> for CliError {
    fn from(e: quadfuse_core::Error) -> Self {
        use quadfuse_core::Error as E;
        match e {
            E::InvalidConfig(_) | E::BadWeights(_) | E::DegenerateDictionary { .. } => CliError::Config(e.to_string()),
            E::Io { .. } => CliError::Other(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<quadfuse_crawl::CrawlError> for CliError {
    fn from(e: quadfuse_crawl::CrawlError) -> Self {
        use quadfuse_crawl::CrawlError as E;
        match e {
            E::EmptySeeds | E::InvalidConfig(_) => CliError::Config(e.to_string()),
            E::Io { .. } => CliError::Other(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<quadfuse_community::CommunityError> for CliError {
    fn from(e: quadfuse_community::CommunityError) -> Self {
        use quadfuse_community::CommunityError as E;
        match e {
            E::InvalidArgument(_) => CliError::Config(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<quadfuse_annotate::AnnotateError> for CliError {
    fn from(e: quadfuse_annotate::AnnotateError) -> Self {
        use quadfuse_annotate::AnnotateError as E;
        match e {
            E::Io { .. } => CliError::Other(e.to_string()),
            E::Core(inner) => inner.into(),
            _ => CliError::Data(e.to_string()),
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
