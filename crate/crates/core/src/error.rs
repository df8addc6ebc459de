use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{file}:{line}: invalid field `{field}`: {reason}")]
    MalformedRow {
        file: PathBuf,
        line: usize,
        field: String,
        reason: String,
    },
    #[error("events reference unknown items: {}", .0.join(", "))]
    UnknownItems(Vec<String>),
    #[error("insufficient events for period split: need at least {needed}, got {got}")]
    InsufficientEvents { needed: usize, got: usize },
    #[error("cannot build {groups} popularity groups from {items} items")]
    TooFewItems { items: usize, groups: usize },
    #[error("no grouped interactions")]
    NoGroupedInteractions,
    #[error("group sets differ: {0}")]
    GroupMismatch(String),
    #[error("length mismatch: {left} slates vs {right} targets")]
    LengthMismatch { left: usize, right: usize },
    #[error("dimension mismatch: table has dim {table}, oracle `{oracle}` has dim {got}")]
    DimensionMismatch { table: usize, oracle: String, got: usize },
    #[error("k = {k} exceeds catalog size {catalog}")]
    KTooLarge { k: usize, catalog: usize },
    #[error("oracle #{index}: {source}")]
    Batch {
        index: usize,
        #[source]
        source: Box<Error>,
    },
    #[error("missing GU values for K = {0}")]
    MissingK(usize),
    #[error("missing weight for sample `{0}`")]
    MissingWeight(String),
    #[error("missing embedding for item `{0}`")]
    MissingEmbedding(String),
    #[error("sequence `{id}` belongs to split `{split}`, expected train")]
    NotTraining { id: String, split: String },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid embedding file {path}: {reason}")]
    EmbeddingFormat { path: PathBuf, reason: String },
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
