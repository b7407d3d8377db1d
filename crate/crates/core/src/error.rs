use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimension {0}: a truncated Fock space needs at least 2 levels")]
    InvalidDimension(usize),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("invalid inverse temperature {0}: beta must be positive")]
    InvalidTemperature(f64),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("non-finite entry encountered in {0}")]
    NonFinite(&'static str),

    #[error("loss of precision: {0}")]
    PrecisionLoss(String),

    #[error("numerical underflow: squared norm {0:e} after no-jump step")]
    NormUnderflow(f64),

    #[error("truncation failure: population {population:.3e} in the top Fock level exceeds {limit:e}")]
    TruncationExceeded { population: f64, limit: f64 },

    #[error("integrator failure: {0}")]
    IntegratorFailure(String),

    #[error("no checkpoint at t = {0}")]
    GridMismatch(f64),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("quadrature did not converge: {0}")]
    Quadrature(String),

    #[error("trajectory {index}: {source}")]
    Trajectory {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("config line {line}: {message}")]
    Config { line: usize, message: String },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. } | Error::InvalidParameter { .. } | Error::InvalidTemperature(_) => 2,
            Error::InvalidDimension(_) => 2,
            Error::Io(_) | Error::Csv(_) => 1,
            Error::GridMismatch(_) => 4,
            _ => 3,
        }
    }
}
