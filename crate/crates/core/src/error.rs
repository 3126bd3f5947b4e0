use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the engine.
///
/// Variants are grouped so front ends can map them onto exit codes:
/// configuration problems, data problems, and everything else.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: missing mapped column `{column}`")]
    MissingColumn { path: PathBuf, column: String },

    #[error("{path}: {failed} of {total} rows could not be parsed")]
    TooManyRejected {
        path: PathBuf,
        failed: usize,
        total: usize,
    },

    #[error("no observations")]
    NoObservations,

    #[error("invalid data: {0}")]
    Data(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("only one class present: {0}")]
    SingleClass(String),

    #[error("column mismatch: {0}")]
    ColumnMismatch(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by the input data rather than configuration
    /// or an internal fault.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::Io { .. }
                | Error::MissingColumn { .. }
                | Error::TooManyRejected { .. }
                | Error::NoObservations
                | Error::Data(_)
                | Error::SingleClass(_)
                | Error::Csv(_)
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
