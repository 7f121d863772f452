use std::io;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("invalid workload: {0}")]
    InvalidSpec(String),
    #[error("unknown variant {0:?}")]
    UnknownVariant(String),
    #[error("variant {variant} is single-writer and cannot run with {actors} actors")]
    UnsupportedCombination { variant: &'static str, actors: usize },
    #[error("invalid structure config: {0}")]
    InvalidConfig(#[from] skipforge::Error),
    #[error("oracle mismatch: {0}")]
    OracleMismatch(String),
    #[error("invariant violated after run: {0}")]
    InvariantViolation(String),
    #[error("csv header differs from the contract: {0:?}")]
    BadHeader(String),
    #[error("malformed row: {0}")]
    MalformedRow(csv::Error),
    #[error("cannot write results: {0}")]
    SinkFailure(#[from] io::Error),
}

impl BenchError {
    /// Process exit status for the CLI.
    pub fn exit_code(&self) -> u8 {
        match self {
            BenchError::OracleMismatch(_) | BenchError::InvariantViolation(_) => 3,
            BenchError::SinkFailure(_) => 4,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, BenchError>;
