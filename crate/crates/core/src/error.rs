use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {message}")]
    MalformedRow { line: usize, message: String },

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("unknown format tag `{0}`")]
    UnknownFormat(String),

    #[error("classes not present in dataset: {}", .0.join(", "))]
    MissingClasses(Vec<String>),

    #[error("class assignment overlaps: {}", .0.join(", "))]
    OverlappingAssignment(Vec<String>),

    #[error("class `{class}` has {count} sample(s); at least 2 are needed to stratify")]
    CannotStratify { class: String, count: usize },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("rejector is not calibrated")]
    Uncalibrated,

    #[error("training diverged at epoch {epoch}: loss = {loss}")]
    NonFiniteLoss { epoch: usize, loss: f64 },

    #[error("sample {0} has no label")]
    Unlabeled(u64),

    #[error("contradictory evidence: likelihood has zero mass under the current {node} belief")]
    ContradictoryEvidence { node: &'static str },

    #[error("collaborative exploration requested with resolution rate `none`")]
    CoExDisabled,

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("model file corrupted: {0}")]
    Corrupted(String),

    #[error("unsupported model file version: {0}")]
    Version(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("chat backend transport failure: {0}")]
    Transport(String),

    #[error("malformed backend reply: {0}")]
    MalformedReply(String),

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
}
