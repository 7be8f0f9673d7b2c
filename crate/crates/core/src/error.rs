use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("line {line}: expected {expected} keypoints, found {found}")]
    KeypointCount {
        line: usize,
        expected: usize,
        found: usize,
    },

    #[error("line {line}: duplicate detection (video {video_id}, track {track_id}, frame {frame})")]
    DuplicateDetection {
        line: usize,
        video_id: String,
        track_id: String,
        frame: u64,
    },

    #[error("line {line}: duplicate record for video {video_id} frame {frame}")]
    DuplicateFrame {
        line: usize,
        video_id: String,
        frame: u64,
    },

    #[error("line {line}: non-finite value")]
    NonFinite { line: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("missing embedding prior header (`dim=<d> mu=<v1,...>`)")]
    MissingPrior,

    #[error("frame {frame} of video {video_id} has no label")]
    Unlabeled { video_id: String, frame: u64 },

    #[error("training video {video_id} carries an anomalous label at frame {frame}")]
    AnomalousInTraining { video_id: String, frame: u64 },

    #[error("video {0} is not listed in the manifest")]
    UnknownVideo(String),

    #[error("social window {video_id}@{start_frame} holds {found} tracks but only {capacity} nodes are available")]
    NodeCapacity {
        video_id: String,
        start_frame: u64,
        found: usize,
        capacity: usize,
    },

    #[error("need at least one {0} sample")]
    MissingClass(&'static str),

    #[error("invalid {what}: {why}")]
    Invalid { what: &'static str, why: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(what: &'static str, why: impl Into<String>) -> Self {
        Error::Invalid {
            what,
            why: why.into(),
        }
    }

    pub(crate) fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            line,
            msg: msg.into(),
        }
    }

    /// Stable machine-readable name of the error variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Parse { .. } => "parse",
            Error::KeypointCount { .. } => "keypoint_count",
            Error::DuplicateDetection { .. } => "duplicate_detection",
            Error::DuplicateFrame { .. } => "duplicate_frame",
            Error::NonFinite { .. } => "non_finite",
            Error::Dimension { .. } => "dimension",
            Error::Shape(_) => "shape",
            Error::Empty(_) => "empty",
            Error::MissingPrior => "missing_prior",
            Error::Unlabeled { .. } => "unlabeled",
            Error::AnomalousInTraining { .. } => "anomalous_in_training",
            Error::UnknownVideo(_) => "unknown_video",
            Error::NodeCapacity { .. } => "node_capacity",
            Error::MissingClass(_) => "missing_class",
            Error::Invalid { .. } => "invalid",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }
}
