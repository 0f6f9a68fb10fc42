use thiserror::Error;

/// Errors produced by the toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix is not Hermitian (deviation {deviation:.3e})")]
    NotHermitian { deviation: f64 },

    #[error("matrix is not positive semidefinite (minimum eigenvalue {min_eigenvalue:.3e})")]
    NotPositive { min_eigenvalue: f64 },

    #[error("invalid density matrix: {0}")]
    InvalidDensity(String),

    #[error("invalid instrument: {0}")]
    InvalidInstrument(String),

    #[error("label {0:?} is not part of the target index set")]
    LabelNotInIndexSet(String),

    #[error("index sets differ: {0}")]
    IndexSetMismatch(String),

    #[error("map is not trace preserving (deviation {deviation:.3e})")]
    NotTracePreserving { deviation: f64 },

    #[error("invalid protocol: {0}")]
    InvalidProtocol(String),

    #[error("protocol is not normalized: {0}")]
    NotNormalized(String),

    #[error("infeasible binary measurement: {0}")]
    InfeasibleMeasurement(String),

    #[error("state is not in the W class: {0}")]
    NotWClass(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("failed check: {0}")]
    CheckFailed(String),

    #[error("malformed input: {0}")]
    Parse(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}
