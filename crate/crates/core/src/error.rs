use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the model pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("parse error at row {row}, column `{column}`: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    #[error("schema mismatch: {0}")]
    Schema(String),

    #[error("invalid record at row {row}: {message}")]
    InvalidRecord { row: usize, message: String },

    #[error("subgroup {0} has no records")]
    EmptySubgroup(usize),

    #[error("covariate `{column}` is constant within {scope}")]
    ConstantColumn { column: String, scope: String },

    #[error("subgroup has no events; the grouped likelihood is unidentifiable")]
    NoEvents,

    #[error("stratum (subgroup {subgroup}, event {event}) has {size} record(s); at least 2 required")]
    StratumTooSmall {
        subgroup: usize,
        event: u8,
        size: usize,
    },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("matrix is not positive definite{}", column.map(|c| format!(" (column {c})")).unwrap_or_default())]
    NotPositiveDefinite { column: Option<usize> },

    #[error("weibull fit did not converge: {0}")]
    WeibullFit(String),

    #[error("enumeration over {0} binary variables is infeasible (limit 20)")]
    EnumerationTooLarge(usize),

    #[error("mcmc failed at iteration {iteration}: {message}")]
    Sampler { iteration: usize, message: String },

    #[error("censoring survival estimate is zero at t = {time}; choose a smaller evaluation horizon")]
    ZeroCensoringWeight { time: f64 },

    #[error("chain file is malformed: {0}")]
    ChainFormat(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
