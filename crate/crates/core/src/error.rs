use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A model input or parameter violates its declared range.
    #[error("invalid {name}: {reason}")]
    InvalidInput { name: &'static str, reason: String },

    /// A configuration key failed to parse or validate.
    #[error("config key `{key}`: {reason}")]
    Config { key: String, reason: String },

    /// The environment was driven out of order (step before reset, step after termination).
    #[error("environment usage: {0}")]
    Usage(String),

    /// Stored artifacts do not agree with the configuration they are evaluated against.
    #[error("metadata mismatch: {0}")]
    Mismatch(String),

    #[error("malformed artifact {path}: {reason}")]
    Artifact { path: PathBuf, reason: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidInput {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn config(key: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by user input (configuration, arguments) rather
    /// than by the runtime environment.
    pub fn is_user_error(&self) -> bool {
        matches!(
            self,
            Error::InvalidInput { .. } | Error::Config { .. } | Error::Mismatch(_)
        )
    }
}
