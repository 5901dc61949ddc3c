use mpi_stereo_core::MpiError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LmpinError {
    #[error("missing tensor `{0}`")]
    MissingTensor(String),
    #[error("tensor `{name}` has shape {found:?}, expected {expected:?}")]
    ShapeMismatch {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error("corrupt weight manifest: {0}")]
    CorruptManifest(String),
    #[error("input is {found_h}x{found_w}, network expects {expected_h}x{expected_w}")]
    ResolutionMismatch {
        expected_h: usize,
        expected_w: usize,
        found_h: usize,
        found_w: usize,
    },
    #[error("feature map dimensions do not match: {0}")]
    DimensionMismatch(String),
    #[error("invalid network config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Core(#[from] MpiError),
}

impl LmpinError {
    pub fn kind(&self) -> &'static str {
        match self {
            Self::MissingTensor(_) => "MissingTensor",
            Self::ShapeMismatch { .. } => "ShapeMismatch",
            Self::CorruptManifest(_) => "CorruptManifest",
            Self::ResolutionMismatch { .. } => "ResolutionMismatch",
            Self::DimensionMismatch(_) => "DimensionMismatch",
            Self::InvalidConfig(_) => "InvalidConfig",
            Self::Core(e) => e.kind(),
        }
    }
}

pub type Result<T> = std::result::Result<T, LmpinError>;
