use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("node index {index} out of range for graph with {n} nodes")]
    NodeOutOfRange { index: usize, n: usize },

    #[error("self-loop on node {0} is not allowed")]
    SelfLoop(usize),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("parse error at {path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("unsupported schema version {found} (expected {expected})")]
    SchemaVersion { found: String, expected: String },

    #[error("asymmetric adjacency in instance {instance}: {u} -> {v} has no reverse entry")]
    Asymmetric { instance: usize, u: usize, v: usize },

    #[error("empty dataset")]
    EmptyDataset,

    #[error("class {0} is absent from the partition")]
    EmptyPartition(u8),

    #[error("training data contains a single class")]
    SingleClass,

    #[error("oracle model is not trained")]
    UntrainedOracle,

    #[error("non-finite value at epoch {epoch}: {what}")]
    NonFinite { epoch: usize, what: String },

    #[error("missing checkpoint: {0}")]
    MissingCheckpoint(String),

    #[error("no trained generator for class {0}")]
    NoGenerator(u8),

    #[error("infeasible configuration: {0}")]
    Infeasible(String),

    #[error("backward called without a completed forward pass")]
    NoForward,

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
