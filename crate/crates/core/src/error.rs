use thiserror::Error;

/// Errors produced by the tracking library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid box: {0}")]
    InvalidBox(String),

    #[error("invalid embedding: {0}")]
    InvalidEmbedding(String),

    #[error("invalid location: {0}")]
    InvalidLocation(String),

    #[error("panorama width mismatch: {0} vs {1}")]
    WidthMismatch(f64, f64),

    #[error("invalid slice layout: {0}")]
    InvalidLayout(String),

    #[error("slice index {index} out of range for {count} slices")]
    SliceOutOfRange { index: usize, count: usize },

    #[error("invalid calibration: {0}")]
    InvalidCalibration(String),

    #[error("invalid kalman state: {0}")]
    InvalidKalman(String),

    #[error("non-finite measurement")]
    NonFiniteMeasurement,

    #[error("empty trajectory")]
    EmptyTrajectory,

    #[error("frame {got} does not follow frame {last}")]
    FrameOrder { last: u64, got: u64 },

    #[error("invalid state transition {from:?} -> {to:?}")]
    StateTransition {
        from: crate::trajectory::TrackState,
        to: crate::trajectory::TrackState,
    },

    #[error("invalid matrix: {0}")]
    InvalidMatrix(String),

    #[error("matrix {rows}x{cols} exceeds brute-force limit {limit}")]
    TooLarge { rows: usize, cols: usize, limit: usize },

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("invalid annotations: {0}")]
    InvalidAnnotations(String),

    #[error("frame range mismatch: {0}")]
    FrameRange(String),

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    #[error("truncated point cloud {path}: {len} bytes is not a multiple of 12")]
    TruncatedCloud { path: String, len: usize },

    #[error("io error on {path}: {msg}")]
    Io { path: String, msg: String },
}

impl Error {
    pub fn io(path: &std::path::Path, err: std::io::Error) -> Self {
        Error::Io {
            path: path.display().to_string(),
            msg: err.to_string(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
