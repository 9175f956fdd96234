use alloc::string::String;

/// Errors raised by the core algorithms.
///
/// Every variant is a contract violation on the caller's inputs; none of the
/// algorithms here fail for numerical reasons once their inputs validate.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid dimensions: {0}")]
    Dimensions(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid spacing: {0}")]
    Spacing(String),
    #[error("invalid geometry: {0}")]
    Geometry(String),
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("rotation is not orthonormal with determinant +1 (deviation {0:.3e})")]
    NonOrthonormal(f64),
    #[error("point outside the image: {0}")]
    OutOfBounds(String),
    #[error("quadrant error: {0}")]
    Quadrant(String),
    #[error("landmark error: {0}")]
    Landmarks(String),
    #[error("not enough samples: need at least {needed}, got {got}")]
    TooFewSamples { needed: usize, got: usize },
}

pub type Result<T, E = Error> = core::result::Result<T, E>;
