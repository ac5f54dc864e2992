use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("non-positive depth {0}")]
    NonPositiveDepth(f64),

    #[error("point behind camera (z = {0})")]
    BehindCamera(f64),

    #[error("invalid intrinsics: {0}")]
    InvalidIntrinsics(String),

    #[error("invalid camera rig: {0}")]
    InvalidRig(String),

    #[error("time {t} outside span [{start}, {end}]")]
    OutOfSegment { t: f64, start: f64, end: f64 },

    #[error("unsupported spherical harmonic degree {0}")]
    UnsupportedShDegree(usize),

    #[error("invalid depth value {value} at pixel ({u}, {v})")]
    InvalidDepth { u: usize, v: usize, value: f64 },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("time step must be positive, got {0}")]
    NonPositiveDt(f64),

    #[error("instance {id} missing from frame {frame}")]
    MissingInstance { id: u32, frame: &'static str },

    #[error("no velocity entry for instance {0}")]
    MissingVelocity(u32),

    #[error("mismatched time metadata: {0}")]
    TimeMismatch(String),

    #[error("need at least 2 context frames, got {0}")]
    TooFewFrames(usize),

    #[error("timestamps not strictly increasing: {0}")]
    NonMonotoneTime(String),

    #[error("image {width}x{height} smaller than {window}x{window} window")]
    ImageTooSmall {
        width: usize,
        height: usize,
        window: usize,
    },

    #[error("empty gaussian list")]
    EmptyGaussians,

    #[error("invalid loss weights: {0}")]
    InvalidWeights(String),

    #[error("perceptual loss weight {0} is nonzero but no perceptual loss is installed")]
    MissingPerceptualLoss(f64),

    #[error("invalid render request: {0}")]
    InvalidRequest(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("format error at byte {offset}: {message}")]
    Format { offset: u64, message: String },

    #[error("unsupported format version {found} (expected {expected})")]
    Version { found: u8, expected: u8 },

    #[error("{path}: dimension mismatch: {message}")]
    Dimension { path: PathBuf, message: String },

    #[error("manifest error: {0}")]
    Manifest(String),

    #[error("quaternion norm {0} deviates from 1 by more than 1e-3")]
    NonUnitQuaternion(f64),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
