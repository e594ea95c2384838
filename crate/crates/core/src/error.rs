use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("invalid direction: norm {norm} is not 1")]
    InvalidDirection { norm: f64 },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("scale is undefined for the zero matrix")]
    UndefinedScale,
    #[error("degenerate sample: {0}")]
    DegenerateSample(String),
    #[error("search too large: {0}")]
    Infeasible(String),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    /// True for errors caused by malformed user input rather than by the data.
    pub fn is_input_error(&self) -> bool {
        !matches!(self, Error::DegenerateSample(_) | Error::UndefinedScale)
    }
}
