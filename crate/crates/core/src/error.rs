use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite value at linear index {index}")]
    NonFinite { index: usize },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("{integrator} integration blew up at step {step}; a smaller time step or the semi_implicit integrator may help")]
    BlowUp { integrator: String, step: usize },

    #[error("sign iteration did not converge after {iterations} steps (last change {last_change:.3e})")]
    SignNotConverged { iterations: usize, last_change: f64 },

    #[error("singular matrix encountered in {0}")]
    Singular(String),

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },

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

    pub fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            message: message.into(),
        }
    }

    /// True for failures caused by inputs on disk or malformed configuration.
    pub fn is_input_error(&self) -> bool {
        matches!(self, Error::Io { .. } | Error::Format { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
