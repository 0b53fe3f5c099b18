use std::fmt;

use crate::data::ChipKey;

/// Errors raised by ingestion and the numeric layers.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("no records")]
    NoRecords,

    #[error("line {line}, column `{column}`: {message}")]
    Parse {
        line: u64,
        column: String,
        message: String,
    },

    #[error("line {line}: duplicate record key {key}")]
    DuplicateKey { line: u64, key: String },

    #[error("chip {0} not found")]
    NotFound(ChipKey),

    #[error("insufficient data: need at least {needed}, found {found}")]
    InsufficientData { needed: usize, found: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("degenerate fit: zero scale parameter")]
    DegenerateFit,

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("invalid config: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn domain(msg: impl fmt::Display) -> Self {
        Error::Domain(msg.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
