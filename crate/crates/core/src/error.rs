use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("circulant embedding has a negative eigenvalue {value:e} at index {index}")]
    EmbeddingNotNonnegative { index: usize, value: f64 },

    #[error("dense covariance factorization limited to n <= {max}, got {n}")]
    SizeExceeded { n: usize, max: usize },

    #[error("covariance matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("simulation horizon must contain at least one step")]
    InvalidHorizon,

    #[error("spot price must be positive, got {0}")]
    NonpositiveSpot(f64),

    #[error("index out of range: {what} = {index} (limit {limit})")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        limit: usize,
    },

    #[error(
        "pricing workload {requested} path-step-strike-inner units exceeds budget {budget}; \
         reduce n_paths, n_steps, strike count or n_inner"
    )]
    CapacityExceeded { requested: u128, budget: u128 },

    #[error("strikes violate k1 < k2 <= k3 < k4: [{0}, {1}, {2}, {3}]")]
    StrikeOrderViolation(f64, f64, f64, f64),

    #[error("strike {0} is not on the pricing grid")]
    StrikeNotOnGrid(f64),

    #[error("portfolio credit {0:e} is not positive")]
    NonpositiveCredit(f64),

    #[error("credit {credit} leaves no breakeven on the {side} side (spread width {width})")]
    NoBreakeven {
        side: &'static str,
        credit: f64,
        width: f64,
    },

    #[error("subset selects no paths")]
    EmptySubset,

    #[error("theorem strike structure requires k1 < k2 = k_low < k3 = k_high < k4: {0}")]
    StrikeStructureViolation(String),

    #[error("{path}:{line}: {message}")]
    SchemaViolation {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("empty directory: no chain files found in {0}")]
    EmptyDirectory(PathBuf),

    #[error("no matching strikes: {0}")]
    NoMatchingStrikes(String),

    #[error("dataset format error in {path}: {message}")]
    Dataset { path: PathBuf, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
