use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Rejected experiment or environment configuration. Raised before any
    /// simulation work starts.
    #[error("configuration error: {0}")]
    Config(String),

    /// A policy was handed feedback that its information model does not
    /// provide (for example LinUCB-B without the observed joint action).
    #[error("feedback contract violation: {0}")]
    Contract(String),

    /// Players that must act in lockstep selected different joint actions.
    #[error("coordination invariant violated at round {round}: intents {intents:?}")]
    Coordination { round: usize, intents: Vec<usize> },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    /// True for errors that the CLI reports with the usage exit code.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config(_) | Error::InvalidArgument(_))
    }
}
