use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),

    #[error("corrupt header: {0}")]
    CorruptHeader(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("invalid {what}: {reason}")]
    Invalid { what: &'static str, reason: String },

    #[error("ROI {0} has no voxels after the mask transform")]
    RoiLost(u32),

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("image has zero variance; cannot normalize")]
    ZeroVariance,

    #[error("sigma_air must be positive")]
    ZeroNoise,

    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },

    #[error("ROI sets differ between conditions: {0}")]
    MismatchedRoiSets(String),

    #[error("feature table lacks shape columns: {0}")]
    MissingShapeColumns(String),

    #[error("no reports to intersect")]
    EmptyUniverse,

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn invalid(what: &'static str, reason: impl Into<String>) -> Self {
        Error::Invalid { what, reason: reason.into() }
    }

    /// True for errors caused by bad input or configuration rather than by
    /// the environment.
    pub fn is_validation(&self) -> bool {
        !matches!(self, Error::Io { .. })
    }
}
