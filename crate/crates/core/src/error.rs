use std::path::PathBuf;

use crate::model::PathTag;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed record at line {line}: {reason}")]
    MalformedLine { line: usize, reason: String },
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("duplicate document id {0:?}")]
    DuplicateId(String),
    #[error("bad magic: expected {expected:?}, found {found:?}")]
    MagicMismatch { expected: [u8; 4], found: [u8; 4] },
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u32),
    #[error("truncated data: {0}")]
    Truncated(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimMismatch { expected: usize, found: usize },
    #[error("tensor at ordinal {ordinal} has no tokens")]
    EmptyTensor { ordinal: usize },
    #[error("invalid vector: {0}")]
    InvalidVector(String),
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error("no tensor stored for ordinal {0}")]
    MissingTensor(u32),
    #[error("index was built from a different corpus (fingerprint {index:016x}, manifest {manifest:016x})")]
    IndexCorpusMismatch { index: u64, manifest: u64 },
    #[error("query enables no retrieval path")]
    NoPaths,
    #[error("missing query payload for {0}")]
    MissingPayload(PathTag),
    #[error("index for {0} is not loaded")]
    IndexNotLoaded(PathTag),
    #[error("{path} scan failed: {source}")]
    PathFailed {
        path: PathTag,
        #[source]
        source: Box<Error>,
    },
    #[error("config error: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
