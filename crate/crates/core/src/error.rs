use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("empty signal")]
    EmptySignal,

    #[error("spectrum has {bins} bins but length {len} needs {expected}")]
    BinCount { bins: usize, len: usize, expected: usize },

    #[error("no valid attention targets in row {row}")]
    NoAttentionTargets { row: usize },

    #[error("dropout probability {0} outside [0, 1)")]
    DropoutProbability(f64),

    #[error("diverged: {0}")]
    Diverged(String),

    #[error("loss must be a scalar, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),

    #[error("empty sequence in row {row}")]
    EmptySequence { row: usize },

    #[error("item id {id} out of range (vocabulary has {n_items} items)")]
    ItemOutOfRange { id: usize, n_items: usize },

    #[error("{path}:{line}: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },

    #[error("empty interaction file {0}")]
    EmptyFile(PathBuf),

    #[error("dataset vanished under k-core filtering (min_count = {0})")]
    KcoreVanished(usize),

    #[error("user {user} has {count} interactions, cannot split")]
    TooFewInteractions { user: String, count: usize },

    #[error("only {available} selectable items, need {needed}")]
    PoolExhausted { available: usize, needed: usize },

    #[error("invalid config: {0}")]
    Config(String),

    #[error("config mismatch on field `{field}`: checkpoint has {checkpoint}, config has {config}")]
    ConfigMismatch {
        field: &'static str,
        checkpoint: String,
        config: String,
    },

    #[error("checkpoint format version {found} unsupported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("missing tensor `{0}`")]
    MissingTensor(String),

    #[error("truncated payload: tensor `{name}` needs bytes {start}..{end}, file has {len}")]
    TruncatedPayload {
        name: String,
        start: usize,
        end: usize,
        len: usize,
    },

    #[error("checkpoint phase is {found}, expected {expected}")]
    Phase {
        found: &'static str,
        expected: &'static str,
    },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error on {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("{0}")]
    Invalid(String),
}

impl Error {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.into(),
            source,
        }
    }
}
