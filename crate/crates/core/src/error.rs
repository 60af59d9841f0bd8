use thiserror::Error;

/// Errors raised by the modelling, replication and detection pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("diagram point {index} has an infinite death; strip infinite points first")]
    InfinitePoint { index: usize },

    #[error("point {index} has negative lifetime coordinate {value}")]
    NegativeLifetime { index: usize, value: f64 },

    #[error("diagram point {index} violates birth > death (birth {birth}, death {death})")]
    BirthNotAboveDeath { index: usize, birth: f64, death: f64 },

    #[error("need at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },

    #[error("all points are identical; bandwidth is undefined")]
    DegenerateSpread,

    #[error("bandwidth matrix is not symmetric positive definite")]
    NotPositiveDefinite,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("degenerate grid rectangle: {0}")]
    DegenerateRectangle(String),

    #[error("no grid node has density above {eps:e}; sampler support is empty")]
    EmptySupport { eps: f64 },

    #[error("shape prior vanishes at point {index} ({x1}, {x2})")]
    ZeroPrior { index: usize, x1: f64, x2: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("objective is not finite at the starting point")]
    NonFiniteObjective,

    #[error("all points are collinear; bagplot geometry is degenerate")]
    CollinearPoints,

    #[error("not enough replicates: need n1 + n2 = {needed}, have {available}")]
    NotEnoughReplicates { needed: usize, available: usize },

    #[error("circulant embedding failed: minimum eigenvalue {min_eigenvalue:e} (relative {relative:e})")]
    EmbeddingFailed { min_eigenvalue: f64, relative: f64 },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
