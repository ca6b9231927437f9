use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}:{line}: parse error: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },
    #[error("integrity error: {0}")]
    Integrity(String),
    #[error("dataset is empty: {0}")]
    EmptyDataset(String),
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("invalid config: {0}")]
    Config(String),
    #[error("item {item} has no frames")]
    MissingFrames { item: usize },
    #[error("unsupported task: {0}")]
    Unsupported(String),
    #[error("cannot sample a negative for user {user}: every item is rated")]
    Sampling { user: usize },
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short machine-readable category used by the CLI error line.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Parse { .. } => "parse",
            Error::Integrity(_) => "integrity",
            Error::EmptyDataset(_) => "empty_dataset",
            Error::Argument(_) => "argument",
            Error::Config(_) => "config",
            Error::MissingFrames { .. } => "missing_frames",
            Error::Unsupported(_) => "unsupported",
            Error::Sampling { .. } => "sampling",
            Error::Checkpoint(_) => "checkpoint",
            Error::Io { .. } => "io",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
