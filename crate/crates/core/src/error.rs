use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Which center marker a lane-fitting failure refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

impl std::fmt::Display for Side {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Side::Left => f.write_str("left"),
            Side::Right => f.write_str("right"),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: {left_w}x{left_h} vs {right_w}x{right_h}")]
    DimensionMismatch {
        left_w: usize,
        left_h: usize,
        right_w: usize,
        right_h: usize,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("insufficient points to fit the {0} center marker")]
    InsufficientPoints(Side),

    #[error("row {y} is outside the lane model band [{top}, {bottom}]")]
    OutOfBand { y: f64, top: f64, bottom: f64 },

    #[error("offset slot {slot} ({side}) has fewer than 2 annotated points")]
    MissingAnnotations { side: Side, slot: usize },

    #[error("invalid lane model: {0}")]
    InvalidModel(String),

    #[error("unsupported label [{theta1},{theta2}]")]
    UnsupportedClass { theta1: u32, theta2: u32 },

    #[error("degenerate training data: {0}")]
    DegenerateData(String),

    #[error("classifier is not trained")]
    Untrained,

    #[error("likelihood buffer is empty")]
    EmptyBuffer,

    #[error("no annotation for clip {clip_id} (frame {frame_idx})")]
    MissingAnnotation { clip_id: String, frame_idx: usize },

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    #[error("config: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl std::fmt::Display, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.to_string(),
            line,
            msg: msg.into(),
        }
    }
}
