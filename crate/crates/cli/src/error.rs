use std::path::PathBuf;

use dial_core::DialError;
use thiserror::Error;

pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("config {path}: unknown keys {keys:?}")]
    UnknownKeys { path: PathBuf, keys: Vec<String> },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{0}")]
    Numeric(String),

    #[error(transparent)]
    Core(#[from] DialError),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Numeric(_) => EXIT_NUMERIC,
            Self::Core(DialError::NonFinite { .. } | DialError::NoConvergence { .. } | DialError::Degenerate(_)) => {
                EXIT_NUMERIC
            }
            _ => EXIT_USAGE,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
