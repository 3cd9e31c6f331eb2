use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("radius exponent {exponent:.3} exceeds cap {cap} at (theta={theta:.4}, phi={phi:.4})")]
    Overflow {
        exponent: f64,
        cap: f64,
        theta: f64,
        phi: f64,
    },

    #[error("profile ray at alpha={alpha:.6} rad hits no projected edge (image {image:?}, angle index {angle_index:?})")]
    NoIntersection {
        alpha: f64,
        image: Option<usize>,
        angle_index: Option<usize>,
    },

    #[error("dimension mismatch: expected {expected}, got {actual} ({what})")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("non-finite objective value at coordinate {coordinate}")]
    NonFiniteGradient { coordinate: usize },

    #[error("optimizer failed for {context}: {reason}")]
    Optimizer { context: String, reason: String },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("{path}:{line}: column `{column}`: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        column: String,
        message: String,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("I/O error on {path}: {source}")]
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

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
