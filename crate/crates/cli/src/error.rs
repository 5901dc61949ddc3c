use std::path::PathBuf;

use mpi_stereo_core::MpiError;
use mpi_stereo_lmpin::LmpinError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Image { path: PathBuf, message: String },
    #[error("{0}: unsupported file format")]
    UnsupportedFormat(PathBuf),
    #[error("corrupt archive: {0}")]
    CorruptArchive(String),
    #[error("file lists do not match: {0}")]
    ListMismatch(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] MpiError),
    #[error(transparent)]
    Network(#[from] LmpinError),
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            Self::Io { .. } => "Io",
            Self::Image { .. } => "Image",
            Self::UnsupportedFormat(_) => "UnsupportedFormat",
            Self::CorruptArchive(_) => "CorruptArchive",
            Self::ListMismatch(_) => "ListMismatch",
            Self::Config(_) => "Config",
            Self::Core(e) => e.kind(),
            Self::Network(e) => e.kind(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }

    /// One-line JSON error record.
    pub fn to_json(&self) -> String {
        serde_json::json!({ "error": self.kind(), "message": self.to_string() }).to_string()
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
