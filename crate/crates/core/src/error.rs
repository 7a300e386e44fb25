use thiserror::Error;

/// Errors produced anywhere in the inversion pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("assembly error: {0}")]
    Assembly(String),
    #[error("solver error: {0}")]
    Solver(String),
    #[error("parameter point ({0}, {1}) lies outside the surrogate domain")]
    OutOfBox(f64, f64),
    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
    #[error("configuration error: {0}")]
    Config(String),
    #[error(
        "surrogate was built for different inputs (file hash {found}, config hash {expected})"
    )]
    HashMismatch { expected: String, found: String },
    #[error("sampler error: {0}")]
    Sampler(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
