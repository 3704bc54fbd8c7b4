use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("not applicable: {0}")]
    NotApplicable(String),

    #[error("root finding did not converge: bracket [{lo:e}, {hi:e}], residuals ({f_lo:e}, {f_hi:e}) after {iterations} iterations")]
    RootFind {
        lo: f64,
        hi: f64,
        f_lo: f64,
        f_hi: f64,
        iterations: usize,
    },

    #[error("factorization failed at row {row}: smallest pivot {pivot:e}")]
    Factorization { row: usize, pivot: f64 },

    #[error("bound violated: {what} (lhs {lhs:e} > rhs {rhs:e})")]
    BoundViolated {
        what: &'static str,
        lhs: f64,
        rhs: f64,
    },

    #[error("penalty grid exceeded {0} points without meeting the stopping rule")]
    GridCap(usize),

    #[error("rejection sampling starved after {0} proposals")]
    Starvation(usize),

    #[error("config error: {0}")]
    Config(String),

    #[error("malformed input: {0}")]
    Malformed(String),

    #[error("i/o error on {path}: {source}")]
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

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
