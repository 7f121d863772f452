//! Keys and values are raw byte strings ordered lexicographically.

use std::cmp::Ordering;

/// An opaque key. Ordering is lexicographic over the bytes, with a strict
/// prefix comparing less than any extension of it.
pub type Key = Vec<u8>;

/// An opaque value. Values carry no ordering semantics.
pub type Value = Vec<u8>;

/// Lexicographic byte comparison; `Equal` iff the inputs are byte-identical.
#[inline]
pub fn compare(a: &[u8], b: &[u8]) -> Ordering {
    a.cmp(b)
}

/// Order-preserving 8-byte big-endian encoding of a `u64`.
#[inline]
pub fn encode_u64(n: u64) -> Key {
    n.to_be_bytes().to_vec()
}

/// Inverse of [`encode_u64`]. Returns `None` unless `key` is exactly 8 bytes.
pub fn decode_u64(key: &[u8]) -> Option<u64> {
    let bytes: [u8; 8] = key.try_into().ok()?;
    Some(u64::from_be_bytes(bytes))
}
