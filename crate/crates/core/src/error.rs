use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain violation: {0}")]
    Domain(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("item {item} out of range for ground set of size {n}")]
    ItemOutOfRange { item: usize, n: usize },
    #[error("item {0} already in set")]
    ItemInSet(usize),
    #[error("item {0} not in set")]
    ItemNotInSet(usize),
    #[error("instance too large: {0}")]
    TooLarge(String),
    #[error("non-finite likelihood: {0}")]
    NonFinite(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("checkpoint format version mismatch: found {found}, expected {expected}")]
    Version { found: u32, expected: u32 },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
