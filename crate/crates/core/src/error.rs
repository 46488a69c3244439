use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix `{name}` is not Hermitian: max |H - H^dagger| = {deviation:.3e}")]
    NotHermitian { name: String, deviation: f64 },

    #[error("matrix `{name}` is not unitary: max |U^dagger U - I| = {deviation:.3e}")]
    NotUnitary { name: String, deviation: f64 },

    #[error("shape mismatch for {what}: expected {expected:?}, got {actual:?}")]
    ShapeMismatch {
        what: String,
        expected: (usize, usize),
        actual: (usize, usize),
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("non-finite value in block `{block}` at iteration {iteration}")]
    NonFinite { iteration: usize, block: String },

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("missing input {}", .0.display())]
    MissingInput(PathBuf),

    #[error("internal error: {0}")]
    Internal(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
