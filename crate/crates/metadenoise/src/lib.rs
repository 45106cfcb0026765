//! Datasets, checkpoints, experiment configuration, reports and the
//! command-line driver around `metadenoise-core`.

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod datasets;
pub mod experiment;
pub mod parallel;
pub mod report;

use std::path::PathBuf;

pub use metadenoise_core as core;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] metadenoise_core::Error),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    /// Malformed file content.
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
    /// Missing or invalid configuration field.
    #[error("config: {0}")]
    Config(String),
    #[error("{0}")]
    Usage(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Format { path: path.into(), message: message.into() }
    }

    /// 1 usage, 2 data or format, 3 numeric failure.
    pub fn exit_code(&self) -> i32 {
        use metadenoise_core::Error as C;
        match self {
            Error::Usage(_) => 1,
            Error::Core(C::Numeric(_) | C::UndefinedStatistic(_)) => 3,
            _ => 2,
        }
    }
}
