use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("format error at line {line}: {message}")]
    Format { line: usize, message: String },

    #[error("domain error at row {row}: {message}")]
    Domain { row: usize, message: String },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("numerics error: {0}")]
    Numerics(String),

    #[error("query budget {budget} is below the required minimum {required}")]
    Budget { budget: usize, required: usize },

    #[error("instance of size {n} exceeds the exhaustive limit {max}")]
    Size { n: usize, max: usize },

    #[error("target size {target} is invalid for a dataset of {n} points")]
    Target { target: usize, n: usize },

    #[error("invalid parameter: {0}")]
    Param(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for failures of the numerical core (as opposed to bad input).
    pub fn is_numerics(&self) -> bool {
        matches!(self, Error::Numerics(_))
    }

    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Param(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
