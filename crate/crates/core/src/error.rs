use std::path::PathBuf;

/// Errors raised anywhere in the registration engine and its harness.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid volume geometry: {0}")]
    InvalidGeometry(String),

    #[error("pyramid with {levels} levels would shrink axis {axis} below 4 voxels (dims {dims:?})")]
    TooCoarse {
        levels: usize,
        axis: usize,
        dims: [usize; 3],
    },

    #[error("frame origin {0:?} lies outside the volume")]
    OutOfBounds([f64; 3]),

    #[error("format error at byte {offset}: {message}")]
    Format { offset: u64, message: String },

    #[error("rotation angle is pi, axis is ambiguous")]
    NonCanonical,

    #[error("transform set is dispersed: pairwise rotation angle {angle_deg:.3} deg exceeds 90 deg")]
    Dispersed { angle_deg: f64 },

    #[error("invalid transform: {0}")]
    InvalidTransform(String),

    #[error("rectal fixed point lies inside the gland ellipsoid")]
    FixedPointInside,

    #[error("invalid probe model: {0}")]
    InvalidModel(String),

    #[error("evaluation domain is empty or carries non-finite values: {0}")]
    InvalidDomain(String),

    #[error("every exploration pose has undefined energy")]
    AllUndefined,

    #[error("acquisitions do not overlap")]
    NoOverlap,

    #[error("scene has no {0} landmarks")]
    NoLandmarks(&'static str),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("manifest error: {0}")]
    Manifest(String),

    #[error("cache does not match: {0}")]
    CacheMismatch(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn format(offset: u64, message: impl Into<String>) -> Self {
        Error::Format {
            offset,
            message: message.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad user input (files, flags, config) rather
    /// than by the registration itself.
    pub fn is_validation(&self) -> bool {
        !matches!(self, Error::AllUndefined | Error::NoOverlap)
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
