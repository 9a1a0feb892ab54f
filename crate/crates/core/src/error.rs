use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("point ({x:.4}, {y:.4}, {z:.4}) is behind the camera")]
    BehindCamera { x: f64, y: f64, z: f64 },

    #[error("quaternion norm {0} is too far from 1")]
    NonUnitQuaternion(f64),

    #[error("surface extraction found {found} of {wanted} points")]
    SurfaceExtraction { found: usize, wanted: usize },

    #[error("object is behind the camera or crosses the near plane")]
    ObjectBehindCamera,

    #[error("rendering codebook bin {bin}: {source}")]
    CodebookBin {
        bin: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("particle initialization failed: {0}")]
    Initialization(String),

    #[error("all particle weights are -inf; the filter has degenerated")]
    DegenerateFilter,

    #[error("need at least {needed} points, got {got}")]
    InsufficientPoints { needed: usize, got: usize },

    #[error("refinement diverged (non-finite objective)")]
    RefinementDiverged,

    #[error("object leaves the camera frustum at frame {frame}")]
    LeavesFrustum { frame: usize },

    #[error("malformed {what}: {detail}")]
    Format { what: &'static str, detail: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("image: {0}")]
    Image(#[from] image::ImageError),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
