//! Crate-wide error type.

use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed NIfTI file {path}: {reason}")]
    Nifti { path: PathBuf, reason: String },

    #[error("unsupported NIfTI datatype code {code} in {path} (only float32, code 16)")]
    NiftiDatatype { path: PathBuf, code: i16 },

    #[error("{path} holds a {ndim}D payload; 4D series must be loaded via read_series")]
    NiftiNot3d { path: PathBuf, ndim: usize },

    #[error("invalid volume: {0}")]
    InvalidVolume(String),

    #[error("geometry mismatch: {0}")]
    GeometryMismatch(String),

    #[error("singular affine (upper-left 3x3 not invertible)")]
    SingularAffine,

    #[error("empty mask where a non-empty mask is required")]
    EmptyMask,

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("box {0} out of grid range")]
    BoxOutOfRange(String),

    #[error("no frames selected in window [{t0}, {t1}] min")]
    EmptyFrameSelection { t0: f64, t1: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("checkpoint error at {path}: {reason}")]
    Checkpoint { path: PathBuf, reason: String },

    #[error("checkpoint version mismatch: found {found}, expected {expected}")]
    CheckpointVersion { found: u32, expected: u32 },

    #[error("dataset error: {0}")]
    Dataset(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("configuration error: {0}")]
    Config(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn nifti(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Nifti {
            path: path.into(),
            reason: reason.into(),
        }
    }
}
