use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("empty document")]
    EmptyDocument,

    #[error("empty text")]
    EmptyText,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("tf-idf embedder needs a non-empty corpus")]
    EmptyCorpus,

    #[error("no external embedding for key {0:?}")]
    MissingEmbedding(String),

    #[error("malformed external embeddings at line {line}: {reason}")]
    ExternalEmbeddings { line: usize, reason: String },

    #[error("document ids do not match; missing from system: {missing_system:?}, missing from references: {missing_references:?}")]
    IdMismatch {
        missing_system: Vec<String>,
        missing_references: Vec<String>,
    },

    #[error("non-finite loss for document {doc_id}: {detail}")]
    NonFiniteLoss { doc_id: String, detail: String },

    #[error("checkpoint format error: {0}")]
    Checkpoint(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io { .. })
    }
}
