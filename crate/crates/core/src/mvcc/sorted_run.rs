//! Sorted-run file format written by [`Memtable::flush`](super::Memtable::flush).
//!
//! All integers are little-endian.
//!
//! ```text
//! magic        4 bytes  "SLR1"
//! record_count 8 bytes
//! record*      key_len u32, key, seq u64, kind u8 (0 value, 1 tombstone),
//!              val_len u32 (0 for tombstones), value
//! checksum     4 bytes  CRC32C of every preceding byte
//! ```

use std::io::{self, Write};

use thiserror::Error;

use crate::key::{Key, Value};
use crate::{Error, Result};

pub const MAGIC: &[u8; 4] = b"SLR1";

const HEADER_LEN: usize = 4 + 8;
const CHECKSUM_LEN: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VersionKind {
    Value,
    Tombstone,
}

impl VersionKind {
    fn tag(self) -> u8 {
        match self {
            VersionKind::Value => 0,
            VersionKind::Tombstone => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Record {
    pub key: Key,
    pub seq: u64,
    pub kind: VersionKind,
    /// Empty for tombstones.
    pub value: Value,
}

/// Why a sorted-run file was rejected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum Corruption {
    #[error("bad magic")]
    BadMagic,
    #[error("truncated")]
    Truncated,
    #[error("checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    ChecksumMismatch { stored: u32, computed: u32 },
    #[error("unknown record kind {0}")]
    BadKind(u8),
    #[error("tombstone carries a {0}-byte value")]
    TombstoneWithValue(u32),
    #[error("{0} bytes after the last record")]
    TrailingBytes(usize),
}

/// Streams a sorted run into a sink, checksumming as it goes.
pub struct RunWriter<W: Write> {
    sink: W,
    crc: u32,
    declared: u64,
    written: u64,
}

impl<W: Write> RunWriter<W> {
    pub fn new(sink: W, record_count: u64) -> io::Result<Self> {
        let mut writer = RunWriter {
            sink,
            crc: 0,
            declared: record_count,
            written: 0,
        };
        writer.put(MAGIC)?;
        writer.put(&record_count.to_le_bytes())?;
        Ok(writer)
    }

    fn put(&mut self, bytes: &[u8]) -> io::Result<()> {
        self.crc = crc32c::crc32c_append(self.crc, bytes);
        self.sink.write_all(bytes)
    }

    /// Appends one record; `value` is `None` for a tombstone.
    pub fn push(&mut self, key: &[u8], seq: u64, value: Option<&[u8]>) -> io::Result<()> {
        self.put(&len_u32(key.len())?.to_le_bytes())?;
        self.put(key)?;
        self.put(&seq.to_le_bytes())?;
        match value {
            Some(v) => {
                self.put(&[VersionKind::Value.tag()])?;
                self.put(&len_u32(v.len())?.to_le_bytes())?;
                self.put(v)?;
            }
            None => {
                self.put(&[VersionKind::Tombstone.tag()])?;
                self.put(&0u32.to_le_bytes())?;
            }
        }
        self.written += 1;
        Ok(())
    }

    /// Writes the checksum and flushes the sink.
    pub fn finish(mut self) -> io::Result<W> {
        if self.written != self.declared {
            return Err(io::Error::new(
                io::ErrorKind::InvalidInput,
                format!("declared {} records, wrote {}", self.declared, self.written),
            ));
        }
        let crc = self.crc;
        self.sink.write_all(&crc.to_le_bytes())?;
        self.sink.flush()?;
        Ok(self.sink)
    }
}

fn len_u32(len: usize) -> io::Result<u32> {
    u32::try_from(len).map_err(|_| io::Error::new(io::ErrorKind::InvalidInput, "field longer than u32::MAX"))
}

/// Validates a whole sorted run and returns its records in file order.
/// Nothing is yielded unless the magic, length and checksum all check out.
pub fn load(bytes: &[u8]) -> Result<std::vec::IntoIter<Record>> {
    parse(bytes).map_err(Error::CorruptFile).map(Vec::into_iter)
}

fn parse(bytes: &[u8]) -> std::result::Result<Vec<Record>, Corruption> {
    let prefix = &bytes[..bytes.len().min(MAGIC.len())];
    if prefix != &MAGIC[..prefix.len()] {
        return Err(Corruption::BadMagic);
    }
    if bytes.len() < HEADER_LEN + CHECKSUM_LEN {
        return Err(Corruption::Truncated);
    }
    let (body, tail) = bytes.split_at(bytes.len() - CHECKSUM_LEN);
    let stored = u32::from_le_bytes(tail.try_into().expect("four bytes"));
    let computed = crc32c::crc32c(body);
    if stored != computed {
        return Err(Corruption::ChecksumMismatch { stored, computed });
    }

    let mut cursor = Cursor { bytes: body, pos: MAGIC.len() };
    let count = cursor.u64()?;
    let mut records = Vec::new();
    for _ in 0..count {
        let key_len = cursor.u32()? as usize;
        let key = cursor.take(key_len)?.to_vec();
        let seq = cursor.u64()?;
        let kind = match cursor.take(1)?[0] {
            0 => VersionKind::Value,
            1 => VersionKind::Tombstone,
            other => return Err(Corruption::BadKind(other)),
        };
        let val_len = cursor.u32()?;
        if kind == VersionKind::Tombstone && val_len != 0 {
            return Err(Corruption::TombstoneWithValue(val_len));
        }
        let value = cursor.take(val_len as usize)?.to_vec();
        records.push(Record { key, seq, kind, value });
    }
    match body.len() - cursor.pos {
        0 => Ok(records),
        extra => Err(Corruption::TrailingBytes(extra)),
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], Corruption> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or(Corruption::Truncated)?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> std::result::Result<u32, Corruption> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("four bytes")))
    }

    fn u64(&mut self) -> std::result::Result<u64, Corruption> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("eight bytes")))
    }
}
