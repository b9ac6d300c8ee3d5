use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by every stage of the matting pipeline.
#[derive(Debug, Error)]
pub enum MattingError {
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: String, right: String },

    #[error("invalid trimap value {value} at pixel ({x}, {y}); expected 0, 128 or 255")]
    InvalidTrimapValue { value: u8, x: u32, y: u32 },

    #[error("no transition region: trimap has zero unknown pixels")]
    NoTransitionRegion,

    #[error("configuration error: {0}")]
    Config(String),

    #[error("missing alpha matte for foreground '{stem}'")]
    MissingAlpha { stem: String },

    #[error("I/O error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("cannot read image {path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("malformed archive: {0}")]
    Archive(String),

    #[error("non-finite value in {term}")]
    NonFinite { term: String },

    #[error("internal consistency error: {0}")]
    Internal(String),
}

impl MattingError {
    /// Configuration-class errors map to CLI exit status 2, everything else to 1.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            MattingError::Config(_)
                | MattingError::MissingAlpha { .. }
                | MattingError::DimensionMismatch { .. }
        )
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        MattingError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = MattingError> = std::result::Result<T, E>;
