//! Error types shared across the crate.

use thiserror::Error;

/// Errors from parameter-vector arithmetic and the local objective.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParamError {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimMismatch { expected: usize, actual: usize },
    #[error("parameter vector must have at least one entry")]
    EmptyVector,
    #[error("non-finite value {value} at index {index}")]
    NonFinite { index: usize, value: f64 },
    #[error("batch is empty")]
    EmptyBatch,
    #[error("batch has {features} feature rows but {labels} labels")]
    RaggedBatch { features: usize, labels: usize },
    #[error("label {0} is not 0 or 1")]
    BadLabel(u8),
    #[error("empty loss sequence")]
    EmptyLosses,
    #[error("step size must be positive and finite, got {0}")]
    BadRate(f64),
}

/// Errors from feature extraction and fusion.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum FusionError {
    #[error("modality {0} appears more than once")]
    DuplicateModality(usize),
    #[error("modality {0} is missing")]
    MissingModality(usize),
    #[error("modality id {id} out of range for {count} modalities")]
    ModalityOutOfRange { id: usize, count: usize },
    #[error("feature dimension mismatch: expected {expected}, got {actual}")]
    DimMismatch { expected: usize, actual: usize },
    #[error("{weights} fusion weights for {features} modalities")]
    WeightCount { weights: usize, features: usize },
    #[error("fusion weight {index} is invalid ({value}); weights must be finite and non-negative")]
    BadWeight { index: usize, value: f64 },
    #[error("fusion weights sum to zero")]
    ZeroWeights,
    #[error("no modality features supplied")]
    NoFeatures,
    #[error("extractor for modality {modality} expects {expected} input, got {actual}")]
    ShapeMismatch {
        modality: usize,
        expected: String,
        actual: String,
    },
    #[error("invalid extractor for modality {modality}: {reason}")]
    BadExtractor { modality: usize, reason: String },
}

/// Errors from the privacy layer.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum PrivacyError {
    #[error("invalid privacy config: {0}")]
    InvalidConfig(String),
    #[error("epsilon is undefined for sigma = 0")]
    ZeroSigma,
    #[error("privacy is disabled")]
    Disabled,
}

/// Errors from weighted aggregation.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum AggregateError {
    #[error("no updates to aggregate")]
    Empty,
    #[error("{updates} updates but {weights} node weights")]
    CountMismatch { updates: usize, weights: usize },
    #[error("update {index} has dimension {actual}, expected {expected}")]
    DimMismatch {
        index: usize,
        expected: usize,
        actual: usize,
    },
    #[error("node weights must be non-negative and sum to 1, got sum {0}")]
    BadWeights(f64),
}

/// Errors from update compression.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CompressionError {
    #[error("top-k requires k >= 1")]
    ZeroK,
    #[error("k = {k} exceeds the update dimension {dim}")]
    KTooLarge { k: usize, dim: usize },
    #[error("sparse index {index} out of range for dimension {dim}")]
    IndexOutOfRange { index: u32, dim: u32 },
    #[error("sparse indices must be strictly increasing")]
    UnsortedIndices,
    #[error("sparse encoding has {indices} indices and {values} values")]
    Ragged { indices: usize, values: usize },
}

/// Framing errors from [`crate::federation::protocol`].
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DecodeError {
    #[error("bad magic bytes {0:02x?}")]
    BadMagic([u8; 4]),
    #[error("unsupported protocol version {0}")]
    UnsupportedVersion(u8),
    #[error("unknown message type {0:#04x}")]
    UnknownType(u8),
    #[error("truncated input: needed {needed} bytes, had {available}")]
    Truncated { needed: usize, available: usize },
    #[error("{0} trailing bytes after frame")]
    TrailingBytes(usize),
    #[error("payload length {0} exceeds the frame limit")]
    Oversized(u32),
    #[error("invalid payload: {0}")]
    InvalidPayload(&'static str),
}

/// Errors raised while running federation rounds.
#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("client {client} sent an update for round {got} while the server is at round {current}")]
    StaleRound { client: u32, got: u32, current: u32 },
    #[error("client {client} sent an update for future round {got} (server at {current})")]
    FutureRound { client: u32, got: u32, current: u32 },
    #[error("update from client {client} has dimension {got}, model has {expected}")]
    DimMismatch { client: u32, expected: usize, got: usize },
    #[error("unknown client id {0}")]
    UnknownClient(u32),
    #[error("duplicate update from client {0}")]
    DuplicateClient(u32),
    #[error("expected {expected} updates, received {got}")]
    MissingUpdates { expected: usize, got: usize },
    #[error("unexpected message: {0}")]
    Unexpected(&'static str),
    #[error("transport does not support this operation: {0}")]
    Unsupported(&'static str),
    #[error("decode error: {0}")]
    Decode(#[from] DecodeError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("worker channel closed")]
    ChannelClosed,
    #[error("client worker failed: {0}")]
    Worker(String),
    #[error(transparent)]
    Param(#[from] ParamError),
    #[error(transparent)]
    Privacy(#[from] PrivacyError),
    #[error(transparent)]
    Aggregate(#[from] AggregateError),
    #[error(transparent)]
    Compression(#[from] CompressionError),
}

/// Errors from synthetic data generation, partitioning and metrics.
#[derive(Debug, Error)]
pub enum DataError {
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),
    #[error("dataset has {samples} samples, fewer than {clients} clients")]
    TooFewSamples { samples: usize, clients: usize },
    #[error("partition left a client empty after {0} attempts")]
    PartitionFailed(usize),
    #[error("predictions ({predictions}) and labels ({labels}) differ in length")]
    LengthMismatch { predictions: usize, labels: usize },
    #[error("nothing to evaluate")]
    Empty,
    #[error("malformed dataset file: {0}")]
    Format(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Fusion(#[from] FusionError),
    #[error(transparent)]
    Param(#[from] ParamError),
}

/// Experiment configuration problems. These map to exit code 2.
#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: String,
        source: std::io::Error,
    },
    #[error("{0}")]
    Parse(String),
    #[error("field `{field}`: {reason}")]
    Invalid { field: String, reason: String },
}

impl ConfigError {
    pub fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        ConfigError::Invalid {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

/// Anything that can go wrong while running an experiment.
#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Param(#[from] ParamError),
    #[error(transparent)]
    Fusion(#[from] FusionError),
    #[error(transparent)]
    Privacy(#[from] PrivacyError),
    #[error("output error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl RunError {
    /// Process exit code for this error: 2 for configuration problems, 3 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 2,
            _ => 3,
        }
    }
}
