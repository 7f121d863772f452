use std::io;

use thiserror::Error;

use crate::mvcc::Corruption;

/// Errors reported by the skiplist family.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid range: lower bound is greater than upper bound")]
    InvalidRange,
    #[error("invalid interval: lo is greater than hi")]
    InvalidInterval,
    #[error("unknown interval id {0}")]
    UnknownId(u64),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("memtable is frozen")]
    Frozen,
    #[error("memtable is already frozen")]
    AlreadyFrozen,
    #[error("memtable must be frozen before flush")]
    NotFrozen,
    #[error("sink failure: {0}")]
    SinkFailure(#[from] io::Error),
    #[error("corrupt sorted-run file: {0}")]
    CorruptFile(Corruption),
}

pub type Result<T> = std::result::Result<T, Error>;
