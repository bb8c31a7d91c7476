use std::path::PathBuf;

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("write failed after {written} records: {source}")]
    PartialWrite {
        written: usize,
        #[source]
        source: std::io::Error,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("malformed input: {0}")]
    Malformed(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Polish(#[from] crate::polisher::PolishError),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit status for this error: 2 for usage and configuration
    /// problems, 3 for a failing external service, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        use crate::polisher::PolishError;
        match self {
            Error::Config(_) | Error::InvalidArgument(_) => 2,
            Error::Polish(PolishError::MissingApiKey(_)) => 2,
            Error::Polish(_) => 3,
            Error::Io { .. } | Error::PartialWrite { .. } | Error::Malformed(_) | Error::Json(_) => 1,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
