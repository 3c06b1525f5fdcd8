use thiserror::Error;

/// Errors produced by the simulation and analysis routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("covariance is not positive definite (pivot {index} is {pivot:e})")]
    NotPositiveDefinite { index: usize, pivot: f64 },
    #[error("covariance is not symmetric at ({row}, {col})")]
    NotSymmetric { row: usize, col: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("unknown benchmark `{0}`")]
    UnknownBenchmark(String),
    #[error("system kind {found} cannot be used here (expected {expected})")]
    WrongKind {
        expected: &'static str,
        found: &'static str,
    },
    #[error("Milstein scheme needs a diffusion gradient, which is unavailable for this system")]
    MilsteinUnavailable,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("at least {required} paths are needed, got {found}")]
    InsufficientPaths { required: usize, found: usize },
    #[error("degenerate variance: {0}")]
    DegenerateVariance(String),
    #[error("only scalar states are supported here (state dimension {0})")]
    UnsupportedDimension(usize),
    #[error("horizon {horizon} exceeds the simulated grid end {grid_end}")]
    HorizonMismatch { horizon: f64, grid_end: f64 },
    #[error("initial state is zero; growth rates are undefined")]
    ZeroInitialState,
    #[error("log-domain law is undefined for a zero initial state")]
    Undefined,
    #[error("custom basis functions cannot be serialized")]
    NotSerializable,
    #[error("malformed ensemble container: {0}")]
    Format(String),
    #[error("I/O error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
