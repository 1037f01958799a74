use thiserror::Error;

/// Errors raised by the modelling, selection and simulation layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid template: {0}")]
    InvalidTemplate(String),
    #[error("configuration too large: {0}")]
    TooLarge(String),
    #[error("invalid layout: {0}")]
    InvalidLayout(String),
    #[error("invalid context: {0}")]
    InvalidContext(String),
    #[error("model {kind} is incompatible with the template: {reason}")]
    IncompatibleKind { kind: String, reason: String },
    #[error("invalid weight descriptor for {kind}: {reason}")]
    InvalidDescriptor { kind: String, reason: String },
    #[error("weight index {index} out of range for dimension {dim}")]
    IndexOutOfRange { index: usize, dim: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error(
        "layout space of {count} layouts exceeds the exhaustive cap of {cap}; use hill climbing"
    )]
    CapExceeded { count: u64, cap: u64 },
    #[error("non-finite value in posterior update: {0}")]
    NonFinite(String),
    #[error("empty window: {0}")]
    EmptyWindow(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;
