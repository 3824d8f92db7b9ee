use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Autodiff(#[from] ecgbench_autodiff::Error),

    #[error("{path}: {position}: {message}")]
    Parse {
        path: PathBuf,
        position: String,
        message: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("record `{id}` too short: {len} samples")]
    TooShort { id: String, len: usize },

    #[error("invalid record: {0}")]
    InvalidRecord(String),

    #[error("task configuration: {0}")]
    TaskConfig(String),

    #[error("degenerate dataset: {0}")]
    Degenerate(String),

    #[error("config: {0}")]
    Config(String),

    #[error("contract violated: {0}")]
    Contract(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, position: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            position: position.into(),
            message: message.into(),
        }
    }
}
