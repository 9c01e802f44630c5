use std::path::PathBuf;

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid spec: {0}")]
    InvalidSpec(String),

    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("empty batch passed to {0}")]
    EmptyBatch(&'static str),

    #[error("{0}")]
    Frozen(String),

    #[error("forward model must be frozen before it enters the dynamics cycle")]
    NotFrozen,

    #[error("bad magic in {path}: expected {expected}")]
    BadMagic { path: String, expected: String },

    #[error("unsupported format version {found} in {path} (supported: {supported})")]
    VersionMismatch {
        path: String,
        found: u32,
        supported: u32,
    },

    #[error("truncated file {path} while reading {what}")]
    Truncated { path: String, what: &'static str },

    #[error("{path}:{line}: {msg}")]
    Config {
        path: String,
        line: usize,
        msg: String,
    },

    #[error("missing prerequisite artifact: {0}")]
    MissingPrerequisite(PathBuf),

    #[error("non-finite {what} at step {step}")]
    NonFinite { what: &'static str, step: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
