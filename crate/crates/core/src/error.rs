use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, NclaError>;

#[derive(Debug, Error)]
pub enum NclaError {
    #[error("{op}: shape mismatch, expected {expected}, got {found}")]
    ShapeMismatch {
        op: &'static str,
        expected: String,
        found: String,
    },

    #[error("{op}: non-finite value produced")]
    NonFinite { op: &'static str },

    #[error("node index {index} out of range for graph with {num_nodes} nodes")]
    NodeOutOfRange { index: usize, num_nodes: usize },

    #[error("I/O error on {}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}:{line}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{}:{line}: edge endpoint {index} out of range for {num_nodes} nodes", path.display())]
    EdgeOutOfRange {
        path: PathBuf,
        line: usize,
        index: usize,
        num_nodes: usize,
    },

    #[error("{}:{line}: non-finite feature value in column {column}", path.display())]
    NonFiniteFeature {
        path: PathBuf,
        line: usize,
        column: usize,
    },

    #[error("{}:{line}: label {label} out of range for {num_classes} classes", path.display())]
    LabelOutOfRange {
        path: PathBuf,
        line: usize,
        label: usize,
        num_classes: usize,
    },

    #[error("{}: expected {expected} {what}, found {found}", path.display())]
    DimensionMismatch {
        path: PathBuf,
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("pivot view {pivot} out of range for {views} views")]
    PivotOutOfRange { pivot: usize, views: usize },

    #[error("non-finite loss at epoch {epoch}; per-view parameter norms {param_norms:?}")]
    NonFiniteLoss { epoch: usize, param_norms: Vec<f64> },

    #[error("graph has no labels")]
    MissingLabels,

    #[error("class {class} has {available} labeled nodes, split needs {required}")]
    InsufficientClass {
        class: usize,
        available: usize,
        required: usize,
    },

    #[error("degenerate split: class {class} absent from training nodes")]
    DegenerateSplit { class: usize },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl NclaError {
    pub(crate) fn shape(op: &'static str, expected: impl ToString, found: impl ToString) -> Self {
        NclaError::ShapeMismatch {
            op,
            expected: expected.to_string(),
            found: found.to_string(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        NclaError::Io {
            path: path.into(),
            source,
        }
    }
}
