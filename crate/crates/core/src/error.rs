use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("rotation is not orthonormal (deviation {deviation:.3e})")]
    InvalidRotation { deviation: f64 },

    #[error("invalid intrinsic matrix: {0}")]
    InvalidIntrinsics(String),

    #[error("point lies on the principal plane of the camera (depth {depth:.3e})")]
    ZeroDepth { depth: f64 },

    #[error("camera index {index} out of range for {n} cameras")]
    IndexOutOfRange { index: usize, n: usize },

    #[error("pair ({i}, {j}) supplied in both orientations but F_ji != F_ij^T (mismatch {mismatch:.3e})")]
    AsymmetricPair { i: usize, j: usize, mismatch: f64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("degenerate configuration: {0}")]
    DegenerateConfiguration(String),

    #[error("could not place cameras with all points visible after {attempts} attempts")]
    GeometryRetryExhausted { attempts: usize },

    #[error("skew-symmetric part of the essential matrix vanishes")]
    VanishingSkewPart,

    #[error("direction graph is not connected")]
    DisconnectedGraph,

    #[error("all pairwise distances collapsed to the lower bound")]
    CollapseDetected,

    #[error("matrix has zero norm")]
    ZeroMatrix,

    #[error("alignment is degenerate: point set has no spread")]
    DegenerateAlignment,

    #[error("invalid configuration field `{field}`: {message}")]
    InvalidConfig { field: String, message: String },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("{path}: {message}")]
    Io { path: String, message: String },

    #[error("{path}:{line}:{column}: {message}")]
    Parse {
        path: String,
        line: usize,
        column: usize,
        message: String,
    },
}

impl Error {
    /// Whether the error stems from the file system rather than the input.
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io { .. })
    }
}
