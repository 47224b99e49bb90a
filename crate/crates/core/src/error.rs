use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Dimensions or parameters that do not fit together.
    #[error("configuration error: {0}")]
    Config(String),

    /// The caller violated an API precondition (missing cache, short history, ...).
    #[error("usage error: {0}")]
    Usage(String),

    /// A numeric argument outside the domain of the function.
    #[error("domain error: {0}")]
    Domain(String),

    /// Malformed input data, with the 1-based line it was found on.
    #[error("input error at {path}:{line}: {message}")]
    Input {
        path: PathBuf,
        line: u64,
        message: String,
    },

    /// Every candidate in a hyperparameter search was unstable.
    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
