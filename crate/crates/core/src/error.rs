use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not Hermitian: ‖M − M†‖_F = {deviation:.3e} exceeds tolerance {tolerance:.1e}")]
    NotHermitian { deviation: f64, tolerance: f64 },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("H0 spectrum is fully degenerate; no transition frequencies exist")]
    DegenerateSpectrum,

    #[error("initial field vanished identically before normalization")]
    ZeroField,

    #[error("index {index} out of range for {len} components")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("fluence penalty requires the control field")]
    MissingField,

    #[error("landscape extrema are defined for the bare objective only; remove the fluence penalty")]
    PenalizedExtrema,

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
