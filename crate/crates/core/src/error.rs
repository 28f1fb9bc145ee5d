use std::io;

use thiserror::Error;

/// Errors produced anywhere in the simulator.
#[derive(Debug, Error)]
pub enum CabError {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    #[error("non-finite input: {0}")]
    NonFinite(&'static str),

    #[error("precision matrix is not positive definite ({0})")]
    NotPositiveDefinite(&'static str),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("protocol violation: {0}")]
    Protocol(String),

    #[error("unsupported operation: {0}")]
    Unsupported(&'static str),

    #[error("dataset error: {0}")]
    Dataset(String),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
}

pub type Result<T> = std::result::Result<T, CabError>;
