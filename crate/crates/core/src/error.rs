use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("simulation produced a non-finite value at index {index}")]
    Simulation { index: usize },

    #[error("series must contain at least {min} finite values, got {got}")]
    SeriesTooShort { min: usize, got: usize },

    #[error("series value at index {index} is not finite")]
    NonFinite { index: usize },

    #[error("degenerate threshold: {0}")]
    DegenerateThreshold(String),

    #[error("threshold is not identifiable: all values of the tail functional are tied")]
    TiedThreshold,

    #[error("extremogram at lag 0 is zero")]
    ZeroGamma0,

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("covariance matrix is not positive semidefinite (smallest eigenvalue {min_eigenvalue:e})")]
    NotPositiveSemidefinite { min_eigenvalue: f64 },

    #[error("row {row}: {message}")]
    Csv { row: u64, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Broad failure classes, used by the command line for exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Usage,
    Data,
    Numerical,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::InvalidParameter(_) | Error::GridMismatch(_) => ErrorClass::Usage,
            Error::SeriesTooShort { .. }
            | Error::NonFinite { .. }
            | Error::DegenerateThreshold(_)
            | Error::TiedThreshold
            | Error::Csv { .. }
            | Error::Io(_)
            | Error::Json(_) => ErrorClass::Data,
            Error::Simulation { .. } | Error::ZeroGamma0 | Error::NotPositiveSemidefinite { .. } => {
                ErrorClass::Numerical
            }
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
