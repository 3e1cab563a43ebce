use std::path::PathBuf;

use crate::geometry::Frame;

/// Errors raised by the asyncdepth pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("point cloud is in the {found:?} frame, expected {expected:?}")]
    FrameMismatch { expected: Frame, found: Frame },

    #[error("invalid camera: {0}")]
    InvalidCamera(String),

    #[error("invalid pose: {0}")]
    InvalidPose(String),

    #[error("frames out of order at position {index}")]
    UnorderedFrames { index: usize },

    #[error("frame at position {index} has no points")]
    EmptyFrame { index: usize },

    #[error("frames belong to different traversals ({first} and {other})")]
    MixedTraversals { first: u64, other: u64 },

    #[error("unknown traversal id {0}")]
    UnknownTraversal(u64),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("no pixel is valid in both depth maps")]
    NoOverlap,

    #[error("malformed {what}: {reason}")]
    Format { what: &'static str, reason: String },

    #[error("{path}: {source}")]
    FileIo {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn format(what: &'static str, reason: impl Into<String>) -> Self {
        Error::Format {
            what,
            reason: reason.into(),
        }
    }

    /// Short machine-readable tag for the error variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::FrameMismatch { .. } => "frame_mismatch",
            Error::InvalidCamera(_) => "invalid_camera",
            Error::InvalidPose(_) => "invalid_pose",
            Error::UnorderedFrames { .. } => "unordered_frames",
            Error::EmptyFrame { .. } => "empty_frame",
            Error::MixedTraversals { .. } => "mixed_traversals",
            Error::UnknownTraversal(_) => "unknown_traversal",
            Error::ShapeMismatch(_) => "shape_mismatch",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::NoOverlap => "no_overlap",
            Error::Format { .. } => "format",
            Error::FileIo { .. } | Error::Io(_) => "io",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
