use thiserror::Error;

/// Errors raised by operators, generators, solvers and drivers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("matrix is not numerically positive definite (smallest pivot {smallest_pivot:e} at row {row})")]
    Factorization { smallest_pivot: f64, row: usize },

    #[error("non-finite objective value {value} in {solver}")]
    NonFinite { solver: &'static str, value: f64 },

    #[error("degenerate problem: {0}")]
    Degenerate(String),

    #[error("oracle check `{check}` failed: deviation {deviation:e} exceeds {tolerance:e}")]
    OracleMismatch {
        check: &'static str,
        deviation: f64,
        tolerance: f64,
    },

    #[error("outer iteration {iteration}: {source}")]
    Iteration {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("malformed input: {0}")]
    Parse(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}

pub(crate) fn check_len(context: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            context,
            expected,
            actual,
        })
    }
}
