use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MpiError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("value out of range: {0}")]
    ValueOutOfRange(String),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("zero dimension: {0}")]
    ZeroDimension(String),
    #[error("bad disparity range: d_min = {d_min}, d_max = {d_max}")]
    BadRange { d_min: f64, d_max: f64 },
    #[error("camera intrinsics are singular or missing")]
    SingularIntrinsics,
    #[error("negative density {value} at index {index}")]
    NegativeSigma { index: usize, value: f32 },
    #[error("downsample factor {factor} does not divide {height}x{width}")]
    BadFactor {
        factor: usize,
        height: usize,
        width: usize,
    },
}

impl MpiError {
    /// Stable machine-readable name of the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            MpiError::DimensionMismatch(_) => "DimensionMismatch",
            MpiError::ValueOutOfRange(_) => "ValueOutOfRange",
            MpiError::NonFinite(_) => "NonFinite",
            MpiError::ZeroDimension(_) => "ZeroDimension",
            MpiError::BadRange { .. } => "BadRange",
            MpiError::SingularIntrinsics => "SingularIntrinsics",
            MpiError::NegativeSigma { .. } => "NegativeSigma",
            MpiError::BadFactor { .. } => "BadFactor",
        }
    }
}

pub type Result<T> = std::result::Result<T, MpiError>;
