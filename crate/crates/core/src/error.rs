use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid depth {0}: must be finite and > 0")]
    InvalidDepth(f64),

    #[error("point is behind the camera (Z = {0})")]
    BehindCamera(f64),

    #[error("pixel ray does not intersect the floor ahead of the camera")]
    NoIntersection,

    #[error("invalid pose: {0}")]
    InvalidPose(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("no floor plane found: {0}")]
    NoFloorFound(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("no valid depth readings in region")]
    NoDepth,

    #[error("no fixture registered for frame `{0}`")]
    MissingFixture(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("invalid scene: {0}")]
    InvalidSpec(String),

    #[error("backend error: {0}")]
    Backend(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Load { path: PathBuf, message: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn load(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Load {
            path: path.into(),
            message: message.into(),
        }
    }

    /// Whether the error stems from bad inputs (files, flags, config) rather
    /// than from a failure while processing valid inputs.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Config(_)
                | Error::Validation(_)
                | Error::InvalidSpec(_)
                | Error::Load { .. }
                | Error::Io { .. }
                | Error::InvalidPose(_)
        )
    }
}
