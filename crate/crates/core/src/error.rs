use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the citation-repair pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("duplicate pub_id {0:?}")]
    DuplicatePubId(String),
    #[error("invalid embedding file: {0}")]
    EmbeddingFormat(String),
    #[error("id count mismatch: header declares {expected} rows but ids file has {found} lines")]
    IdCountMismatch { expected: usize, found: usize },
    #[error("embedding id {0:?} is not a corpus node")]
    UnknownEmbeddingId(String),
    #[error("corpus nodes without embedding: {}", .0.join(", "))]
    MissingEmbeddings(Vec<String>),
    #[error("row {0} has zero norm")]
    ZeroRow(usize),
    #[error("index {index} out of range for {len} rows")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("dimension drift: expected {expected}, service returned {found}")]
    DimensionDrift { expected: usize, found: usize },
    #[error("embedding service failed for batch starting at {pub_id:?}: {message}")]
    Service { pub_id: String, message: String },
    #[error("empty candidate set")]
    EmptyCandidates,
    #[error("non-positive edge weight {weight} on ({u}, {v})")]
    NonPositiveWeight { u: usize, v: usize, weight: f64 },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("threshold {threshold} selects entire graph (largest cluster has {largest} nodes)")]
    ThresholdSelectsAll { threshold: usize, largest: usize },
    #[error("alpha {0} outside [0, 1]")]
    AlphaOutOfRange(f64),
    #[error("weight {0} outside [0, 1]")]
    WeightOutOfRange(f64),
    #[error("brute-force search supports at most {max} nodes, got {n}")]
    TooManyNodes { n: usize, max: usize },
    #[error("{0}")]
    Infeasible(String),
    #[error("stage {stage} failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
