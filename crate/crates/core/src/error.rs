use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the mapping pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("point ({x:.3}, {y:.3}) lies outside the grid")]
    OutOfBounds { x: f64, y: f64 },

    #[error("no path: {0}")]
    NoPath(String),

    #[error("point cloud is empty")]
    EmptyCloud,

    #[error("unknown object id `{0}`")]
    UnknownId(String),

    #[error("duplicate object id `{0}`")]
    DuplicateId(String),

    #[error("robot is stuck: {0}")]
    Stuck(String),

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("unknown phase `{name}` (defined phases: {defined})")]
    UnknownPhase { name: String, defined: String },

    #[error("{path}: parse error at {location}: {message}")]
    Parse {
        path: String,
        location: String,
        message: String,
    },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<String>, location: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            location: location.into(),
            message: message.into(),
        }
    }

    /// True for errors caused by bad input files or parameters rather than
    /// by something that went wrong while simulating.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            Error::InvalidParam(_)
                | Error::UnknownPhase { .. }
                | Error::Parse { .. }
                | Error::UnknownId(_)
                | Error::DuplicateId(_)
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
