use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum GxError {
    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },

    #[error("matrix is not symmetric: entry ({i},{j}) = {a} but ({j},{i}) = {b}")]
    Asymmetric { i: usize, j: usize, a: f64, b: f64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("node index {node} out of range for graph with {n} nodes")]
    NodeOutOfRange { node: usize, n: usize },

    #[error("unknown dataset `{0}`")]
    UnknownDataset(String),

    #[error("non-finite loss at {context}: {value}")]
    NonFiniteLoss { context: String, value: f64 },

    #[error("weak predictor: training accuracy {accuracy:.3} below floor {floor:.2}")]
    WeakPredictor { accuracy: f64, floor: f64 },

    #[error("missing attack artifacts: {0}")]
    MissingArtifacts(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, GxError>;
