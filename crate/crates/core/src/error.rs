use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite value: {0}")]
    NonFinite(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("fingerprint has zero norm after RSS shift")]
    ZeroNorm,

    #[error("need at least {needed} fingerprints, got {got}")]
    TooFewFingerprints { needed: usize, got: usize },

    #[error("distance model has no populated bins")]
    EmptyModel,

    #[error("graph is disconnected; nodes unreachable from the fixed node: {0:?}")]
    Disconnected(Vec<usize>),

    #[error("graph has no edges")]
    NoEdges,

    #[error("invalid edge {i} -> {j}: {reason}")]
    InvalidEdge { i: usize, j: usize, reason: String },

    #[error("normal matrix not positive definite after damping")]
    NotPositiveDefinite,

    #[error("empty odometry stream")]
    EmptyOdometry,

    #[error("dataset has no LiDAR scans; use the `radio-slam` command for radio-only data")]
    NoScans,

    #[error("dataset has no fingerprints")]
    NoFingerprints,

    #[error("length mismatch: {0} poses vs {1} scans")]
    LengthMismatch(usize, usize),

    #[error("grid is empty")]
    EmptyGrid,

    #[error("no timestamp pairs within {max_dt} s")]
    NoAssociations { max_dt: f64 },

    #[error("waypoint segment {segment} crosses wall {wall}")]
    PathCrossesWall { segment: usize, wall: usize },

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: u64,
        msg: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: u64, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            msg: msg.into(),
        }
    }
}
