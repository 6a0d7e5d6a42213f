//! Error types shared across the engine.

use thiserror::Error;

use crate::graph::NodeId;

/// Failures produced by embedding providers.
#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("cannot embed empty text")]
    EmptyText,
    #[error("embedding dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("embedding has zero norm or non-finite components")]
    Degenerate,
    #[error("invalid embedder config: {0}")]
    Config(String),
    /// The external service could not be reached or answered malformed data.
    #[error("embedding service transport error: {0}")]
    Transport(String),
}

/// Failures of graph mutations.
#[derive(Debug, Error)]
pub enum GraphError {
    #[error("timestamp {given} precedes latest episode timestamp {latest}")]
    NonMonotoneTimestamp { given: f64, latest: f64 },
    #[error("turn content is empty")]
    EmptyContent,
    #[error("semantic node name is empty")]
    EmptyName,
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("node {0} is not archived")]
    NotArchived(NodeId),
    #[error("invalid edge {src} -> {dst}: {reason}")]
    InvalidEdge {
        src: NodeId,
        dst: NodeId,
        reason: &'static str,
    },
    #[error("edge weight {0} outside [0, 1]")]
    WeightOutOfRange(f64),
    #[error("memory store is empty")]
    EmptyStore,
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error("extraction failed: {0}")]
    Extraction(#[from] ExtractError),
}

/// Failures of concept extraction, including LLM response parsing.
#[derive(Debug, Error)]
pub enum ExtractError {
    #[error("malformed {block} block at line {line}, column {column}: {message}")]
    Malformed {
        block: &'static str,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("record {index} of {block} block (line {line}, column {column}): {message}")]
    InvalidRecord {
        block: &'static str,
        index: usize,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("lexicon error: {0}")]
    Lexicon(String),
    #[error("extractor backend failed: {0}")]
    Backend(String),
}

#[derive(Debug, Error, PartialEq)]
pub enum LexicalError {
    #[error("node {0} is already indexed")]
    Duplicate(NodeId),
    #[error("node {0} is not indexed")]
    Unknown(NodeId),
}

#[derive(Debug, Error)]
pub enum ParamError {
    #[error("invalid parameter {name}: {reason}")]
    Invalid { name: &'static str, reason: String },
    #[error("cannot parse parameter file: {0}")]
    Parse(String),
}

/// Snapshot load/save failures. Each variant maps to a stable numeric code.
#[derive(Debug, Error)]
pub enum PersistError {
    #[error("i/o error: {0}")]
    Transport(#[from] std::io::Error),
    #[error("not a snapshot file (bad magic)")]
    BadMagic,
    #[error(
        "snapshot format version {found} is not supported (this build reads version {supported})"
    )]
    Version { found: u32, supported: u32 },
    #[error("snapshot truncated: {0}")]
    Truncated(String),
    #[error("snapshot checksum mismatch")]
    Checksum,
    #[error("snapshot integrity error: {0}")]
    Integrity(String),
}

impl PersistError {
    pub fn code(&self) -> u8 {
        match self {
            PersistError::Transport(_) => 1,
            PersistError::BadMagic => 2,
            PersistError::Version { .. } => 3,
            PersistError::Truncated(_) => 4,
            PersistError::Checksum => 5,
            PersistError::Integrity(_) => 6,
        }
    }
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("weighted average over zero instances")]
    ZeroCount,
    #[error("dataset error: {0}")]
    Dataset(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Top-level error for engine operations.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Extract(#[from] ExtractError),
    #[error(transparent)]
    Lexical(#[from] LexicalError),
    #[error(transparent)]
    Params(#[from] ParamError),
    #[error(transparent)]
    Persist(#[from] PersistError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("conversation {0}")]
    Conversation(#[from] crate::conversation::ParseError),
}

impl Error {
    /// True when the failure comes from I/O or a remote service rather than bad input.
    pub fn is_transport(&self) -> bool {
        matches!(
            self,
            Error::Embed(EmbedError::Transport(_))
                | Error::Graph(GraphError::Embed(EmbedError::Transport(_)))
                | Error::Persist(PersistError::Transport(_))
                | Error::Eval(EvalError::Io(_))
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
