//! A family of skiplist variants behind one ordered-map contract.
//!
//! | module            | structure                                              |
//! |-------------------|--------------------------------------------------------|
//! | [`classic`]       | probabilistic skiplist, optionally unrolled            |
//! | [`deterministic`] | 1-2-3 deterministic skiplist with bounded search       |
//! | [`duality`]       | conversion between 1-2-3 skiplists and 2-3-4 trees     |
//! | [`concurrent`]    | lock-free skiplist with logical deletion marks         |
//! | [`mvcc`]          | multi-version memtable with snapshots and flush        |
//! | [`interval`]      | interval skiplist answering stabbing queries           |
//! | [`adaptive`]      | search-adaptive skiplist with promotion and decay      |
//!
//! Keys and values are byte strings; see [`key`].

pub mod adaptive;
pub mod classic;
pub mod concurrent;
pub mod deterministic;
pub mod duality;
mod error;
pub mod interval;
pub mod key;
pub mod level;
pub mod mvcc;
mod stats;

pub use error::{Error, Result};
pub use key::{compare, decode_u64, encode_u64, Key, Value};
pub use level::{LevelGenConfig, LevelGenerator};
pub use stats::SearchStats;

/// The single-writer ordered-map contract shared by the sequential variants.
///
/// Reads take `&mut self` because search-adaptive variants restructure
/// themselves while searching.
pub trait OrderedMap {
    /// Upsert. Returns the previous value when the key was present.
    fn insert(&mut self, key: Key, value: Value) -> Option<Value>;

    fn get(&mut self, key: &[u8]) -> Option<Value>;

    /// Same answer as [`OrderedMap::get`] plus the cost of the search.
    fn get_traced(&mut self, key: &[u8]) -> (Option<Value>, SearchStats);

    fn remove(&mut self, key: &[u8]) -> Option<Value>;

    /// Entries with `lo <= key <= hi`, ascending. Fails with
    /// [`Error::InvalidRange`] when `lo > hi`.
    fn range_scan(&mut self, lo: &[u8], hi: &[u8]) -> Result<Vec<(Key, Value)>>;

    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
