use std::path::PathBuf;

use crate::finding::FindingType;

/// Errors produced across the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("unmapped class name: {0:?}")]
    UnmappedClass(String),

    #[error("degenerate label: {0} has no set bits, similarity is undefined")]
    DegenerateLabel(String),

    #[error("label may not combine {no_finding} with {other}", no_finding = FindingType::NoFinding, other = .0)]
    ExclusivityViolation(FindingType),

    #[error("invalid label encoding: {0}")]
    InvalidLabel(String),

    #[error("pool of {pool} records cannot supply a batch of {requested}")]
    InsufficientData { pool: usize, requested: usize },

    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("contract violation: {0}")]
    ContractViolation(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("loss became non-finite at step {step}; batch dump written to {dump:?}")]
    NonFiniteLoss { step: u64, dump: PathBuf },

    #[error("frozen parameters drifted during fine-tuning ({0})")]
    FrozenParameterDrift(String),

    #[error("requested K={k} exceeds candidate count {candidates}")]
    KOutOfRange { k: usize, candidates: usize },

    #[error("too many malformed rows while ingesting {path:?}: {skipped} skipped (threshold {threshold})")]
    TooManyMalformed {
        path: PathBuf,
        skipped: usize,
        threshold: usize,
    },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("i/o error on {path:?}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed json in {path:?}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
