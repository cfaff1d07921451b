//! Crate-wide error type.

use std::path::PathBuf;

/// Broad failure class, used by callers (the CLI) to map errors to exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// Bad arguments or configuration.
    Usage,
    /// Unreadable, malformed or empty input data.
    Data,
    /// Non-finite intermediates, failed fits, diverging optimizers.
    Numeric,
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("schema error: {0}")]
    Schema(String),
    #[error("invalid MBTI label {0:?}")]
    InvalidLabel(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("fit error: {0}")]
    Fit(String),
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("artifact error: {0}")]
    Artifact(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Config(_) => ErrorClass::Usage,
            Error::Io { .. } | Error::Schema(_) | Error::InvalidLabel(_) | Error::Artifact(_) => {
                ErrorClass::Data
            }
            Error::Fit(_) | Error::Numeric(_) => ErrorClass::Numeric,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
