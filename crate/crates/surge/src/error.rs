//! Crate-wide error type.

use thiserror::Error;

/// Errors surfaced by workload generation, aggregation, encoding,
/// serialization, storage, and pipeline runs.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration value.
    #[error("invalid config: {0}")]
    Config(String),

    /// Statistics requested over an empty workload.
    #[error("workload is empty")]
    EmptyWorkload,

    /// A partition key reappeared after a different key was seen.
    #[error("out-of-order stream: key {key:?} reappeared after {current:?}")]
    OutOfOrderKey { key: String, current: String },

    /// `finalize` called twice on the same aggregator.
    #[error("aggregator already finalized")]
    DoubleFinalize,

    /// Encode called on an empty batch.
    #[error("cannot encode an empty batch")]
    EmptyBatch,

    /// Row range does not fit the matrix.
    #[error("slice {start}..{end} out of bounds for matrix with {rows} rows")]
    SliceOutOfBounds {
        start: usize,
        end: usize,
        rows: usize,
    },

    /// Partition-file encoding or decoding failure.
    #[error(transparent)]
    Format(#[from] FormatError),

    /// An upload exhausted its retry budget.
    #[error("upload failed after {attempts} attempts: {path}")]
    UploadFailed { path: String, attempts: u32 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Structured partition-file decode errors. Each malformation is its own
/// variant so tests can assert the failure mode, not just "bad file".
#[derive(Debug, Error, PartialEq, Eq)]
pub enum FormatError {
    #[error("bad magic: expected \"SRGB\", got {0:02x?}")]
    BadMagic([u8; 4]),

    #[error("unsupported version {0}")]
    BadVersion(u16),

    /// The buffer ended before the declared section did.
    #[error("truncated file: needed {needed} bytes at offset {offset}, had {available}")]
    Truncated {
        offset: usize,
        needed: usize,
        available: usize,
    },

    /// Declared lengths do not agree with each other.
    #[error("length mismatch: {0}")]
    LengthMismatch(String),

    /// Trailing bytes after the embeddings section.
    #[error("trailing garbage: {0} bytes past end of embeddings")]
    TrailingBytes(usize),
}

pub type Result<T> = std::result::Result<T, Error>;
