//! Crate-wide error type and result alias.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: String,
        expected: usize,
        actual: usize,
    },

    #[error("invalid model dims: {0}")]
    InvalidDims(String),

    #[error("non-finite activation detected at layer {layer}")]
    NonFiniteActivation { layer: usize },

    #[error(
        "head address (layer {layer}, head {head}) out of range for {n_layers}x{n_heads} model"
    )]
    AddressOutOfRange {
        layer: usize,
        head: usize,
        n_layers: usize,
        n_heads: usize,
    },

    #[error("context overflow: {requested} tokens exceed max_seq {max_seq}")]
    ContextOverflow { requested: usize, max_seq: usize },

    #[error("token {token} out of range for vocab {vocab}")]
    TokenOutOfRange { token: u32, vocab: usize },

    #[error("empty {class} class for head (layer {layer}, head {head})")]
    EmptyClass {
        class: String,
        layer: usize,
        head: usize,
    },

    #[error("duplicate head address (layer {layer}, head {head}) in config")]
    DuplicateAddress { layer: usize, head: usize },

    #[error("length mismatch: {context} ({left} vs {right})")]
    LengthMismatch {
        context: String,
        left: usize,
        right: usize,
    },

    #[error("empty prompt")]
    EmptyPrompt,

    #[error("empty layer {layer} handed to divide")]
    EmptyLayer { layer: usize },

    #[error("empty head set")]
    EmptyHeadSet,

    #[error("conquer queue is empty")]
    EmptyQueue,

    #[error("no steering direction known for head (layer {layer}, head {head})")]
    MissingDirection { layer: usize, head: usize },

    #[error("evaluator failed on config [{config}]: {source}")]
    EvaluatorFailure {
        config: String,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid search thresholds: {0}")]
    InvalidThresholds(String),

    #[error("invalid generation settings: {0}")]
    InvalidSettings(String),

    #[error("prompt template is missing placeholder {placeholder}")]
    MissingPlaceholder { placeholder: String },

    #[error("case {id} has no gold label")]
    MissingGoldLabel { id: String },

    #[error("no verdicts to vote over")]
    EmptyVote,

    #[error("model schema violation at {location}: {reason}")]
    SchemaViolation { location: String, reason: String },

    #[error("dangling reference at {location}: {reference} does not exist")]
    DanglingReference { location: String, reference: String },

    #[error("entity name {name:?} contains the reserved '|' delimiter")]
    ReservedDelimiter { name: String },

    #[error("unknown seed component {id:?}")]
    UnknownSeed { id: String },

    #[error("embedding produced an all-zero vector for {context:?}")]
    AllZeroEmbedding { context: String },

    #[error("malformed triple line {line:?}")]
    MalformedTriple { line: String },

    #[error("{stage} stage failed: {source}")]
    StageFailure {
        stage: String,
        #[source]
        source: Box<Error>,
    },

    #[error("bad input {path}: {reason}")]
    BadInput { path: String, reason: String },

    #[error("unsupported file version {found} (expected {expected})")]
    SnapshotVersion { found: u32, expected: u32 },

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("config parse error: {0}")]
    ConfigParse(String),
}

impl Error {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code contract: 0 success, 1 threshold-not-met, 2 input error.
    pub fn exit_code(&self) -> i32 {
        2
    }
}

pub type Result<T> = std::result::Result<T, Error>;
