use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the density-index pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed header: {0}")]
    Header(String),

    #[error("no valid rows in {path} ({rejected} rejected)")]
    NoValidRows { path: PathBuf, rejected: usize },

    #[error("invalid registry: {0}")]
    Registry(String),

    #[error("unknown region `{0}`")]
    UnknownRegion(String),

    #[error("date {0} precedes the 1990-01-01 epoch")]
    BeforeEpoch(chrono::NaiveDate),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::Numerical(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
