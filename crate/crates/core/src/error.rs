use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("schema error: {0}")]
    Schema(String),

    /// `row` is the 1-based data row (the header is not counted).
    #[error("parse error at row {row}, column `{column}`: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("model spec error: {0}")]
    Spec(String),

    #[error("fit error: {0}")]
    Fit(String),

    #[error("estimation error: {0}")]
    Estimation(String),

    #[error("bootstrap replicate {replicate} still degenerate after {attempts} draws; last error: {last_error}")]
    RedrawLimit {
        replicate: usize,
        attempts: usize,
        last_error: String,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Errors raised while estimating (as opposed to malformed input).
    pub fn is_estimation_failure(&self) -> bool {
        matches!(
            self,
            Error::Fit(_) | Error::Estimation(_) | Error::RedrawLimit { .. }
        )
    }
}
