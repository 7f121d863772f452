//! Multi-version memtable.
//!
//! Each key owns a vertical chain of versions ordered newest first, and the
//! chains are indexed by the lock-free skiplist. Versions are never dropped
//! before flush, so a snapshot can be read forever.
//!
//! Sequence numbers come from one atomic counter. Because a writer takes
//! its number before its version is linked, snapshots read a separate
//! published watermark that only advances once every smaller number is
//! linked; this keeps reads through a snapshot repeatable while writers
//! race.

mod sorted_run;

use std::io::Write;
use std::sync::atomic::{AtomicBool, AtomicU64, AtomicUsize, Ordering};

use crossbeam_epoch::{self as epoch, Atomic, Owned};

pub use sorted_run::{load, Corruption, Record, RunWriter, VersionKind, MAGIC};

use crate::concurrent::ConcurrentSkiplist;
use crate::key::{Key, Value};
use crate::{Error, Result, SearchStats};

pub type SequenceNumber = u64;

/// Fixed per-version overhead counted by [`Memtable::approximate_bytes`].
pub const VERSION_OVERHEAD: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Snapshot {
    visible_seq: SequenceNumber,
}

impl Snapshot {
    pub fn visible_seq(self) -> SequenceNumber {
        self.visible_seq
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Lookup {
    Found(Value),
    Deleted,
    Absent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum State {
    Active,
    Frozen,
}

struct Version {
    seq: SequenceNumber,
    /// `None` marks a tombstone.
    value: Option<Value>,
    next: Atomic<Version>,
}

/// Lock-free list of versions in descending sequence order. Versions are
/// only ever added, and freed when the chain itself is dropped.
struct VersionChain {
    head: Atomic<Version>,
}

impl VersionChain {
    fn new() -> Self {
        VersionChain { head: Atomic::null() }
    }

    fn add(&self, seq: SequenceNumber, value: Option<Value>) {
        let guard = &epoch::pin();
        let mut new = Owned::new(Version {
            seq,
            value,
            next: Atomic::null(),
        });
        loop {
            let mut link = &self.head;
            let mut curr = link.load(Ordering::Acquire, guard);
            while let Some(v) = unsafe { curr.as_ref() } {
                if v.seq < seq {
                    break;
                }
                link = &v.next;
                curr = link.load(Ordering::Acquire, guard);
            }
            new.next.store(curr, Ordering::Relaxed);
            match link.compare_exchange(curr, new, Ordering::AcqRel, Ordering::Acquire, guard) {
                Ok(_) => return,
                Err(err) => new = err.new,
            }
        }
    }

    /// Visits versions newest first until `f` returns false.
    fn walk(&self, mut f: impl FnMut(SequenceNumber, Option<&Value>) -> bool) {
        let guard = &epoch::pin();
        let mut curr = self.head.load(Ordering::Acquire, guard);
        while let Some(v) = unsafe { curr.as_ref() } {
            if !f(v.seq, v.value.as_ref()) {
                return;
            }
            curr = v.next.load(Ordering::Acquire, guard);
        }
    }

    fn resolve(&self, visible: SequenceNumber) -> Lookup {
        let mut out = Lookup::Absent;
        self.walk(|seq, value| {
            if seq > visible {
                return true;
            }
            out = match value {
                Some(v) => Lookup::Found(v.clone()),
                None => Lookup::Deleted,
            };
            false
        });
        out
    }
}

impl Drop for VersionChain {
    fn drop(&mut self) {
        unsafe {
            let guard = epoch::unprotected();
            let mut curr = self.head.load(Ordering::Relaxed, guard);
            while !curr.is_null() {
                let next = curr.deref().next.load(Ordering::Relaxed, guard);
                drop(curr.into_owned());
                curr = next;
            }
        }
    }
}

pub struct Memtable {
    chains: ConcurrentSkiplist<VersionChain>,
    next_seq: AtomicU64,
    published: AtomicU64,
    frozen: AtomicBool,
    in_flight: AtomicUsize,
    approximate_bytes: AtomicUsize,
}

impl Default for Memtable {
    fn default() -> Self {
        Self::new()
    }
}

impl Memtable {
    pub fn new() -> Self {
        Memtable {
            chains: ConcurrentSkiplist::new(),
            next_seq: AtomicU64::new(1),
            published: AtomicU64::new(0),
            frozen: AtomicBool::new(false),
            in_flight: AtomicUsize::new(0),
            approximate_bytes: AtomicUsize::new(0),
        }
    }

    pub fn put(&self, key: Key, value: Value) -> Result<SequenceNumber> {
        self.write(key, Some(value))
    }

    /// Records a tombstone, whether or not the key was ever written.
    pub fn del(&self, key: Key) -> Result<SequenceNumber> {
        self.write(key, None)
    }

    fn write(&self, key: Key, value: Option<Value>) -> Result<SequenceNumber> {
        // Pairs with the SeqCst flag swap in `freeze`: either this writer
        // sees the flag or the freezer sees this writer in flight.
        self.in_flight.fetch_add(1, Ordering::SeqCst);
        if self.frozen.load(Ordering::SeqCst) {
            self.in_flight.fetch_sub(1, Ordering::SeqCst);
            return Err(Error::Frozen);
        }
        let bytes = key.len() + value.as_ref().map_or(0, Vec::len) + VERSION_OVERHEAD;
        let seq = self.next_seq.fetch_add(1, Ordering::SeqCst);
        self.chains
            .get_or_insert_with(key, VersionChain::new, |chain| chain.add(seq, value));
        self.approximate_bytes.fetch_add(bytes, Ordering::Relaxed);

        let mut spins = 0u32;
        while self.published.load(Ordering::Acquire) != seq - 1 {
            spins += 1;
            if spins < 64 {
                std::hint::spin_loop();
            } else {
                std::thread::yield_now();
            }
        }
        self.published.store(seq, Ordering::Release);
        self.in_flight.fetch_sub(1, Ordering::SeqCst);
        Ok(seq)
    }

    pub fn snapshot(&self) -> Snapshot {
        Snapshot {
            visible_seq: self.published.load(Ordering::Acquire),
        }
    }

    pub fn get(&self, key: &[u8], snap: Snapshot) -> Lookup {
        self.get_traced(key, snap).0
    }

    pub fn get_traced(&self, key: &[u8], snap: Snapshot) -> (Lookup, SearchStats) {
        let (found, stats) = self.chains.visit_traced(key, |chain| chain.resolve(snap.visible_seq));
        (found.unwrap_or(Lookup::Absent), stats)
    }

    /// Keys in `[lo, hi]` whose newest visible version is a value.
    pub fn scan(&self, lo: &[u8], hi: &[u8], snap: Snapshot) -> Result<Vec<(Key, Value)>> {
        if lo > hi {
            return Err(Error::InvalidRange);
        }
        let mut out = Vec::new();
        self.chains.visit_from(lo, |key, chain| {
            if key.as_slice() > hi {
                return false;
            }
            if let Lookup::Found(v) = chain.resolve(snap.visible_seq) {
                out.push((key.clone(), v));
            }
            true
        });
        Ok(out)
    }

    /// Rejects all later mutations. Returns once every write that got past
    /// the frozen check has been published.
    pub fn freeze(&self) -> Result<()> {
        if self.frozen.swap(true, Ordering::SeqCst) {
            return Err(Error::AlreadyFrozen);
        }
        while self.in_flight.load(Ordering::SeqCst) != 0 {
            std::thread::yield_now();
        }
        Ok(())
    }

    pub fn state(&self) -> State {
        if self.frozen.load(Ordering::SeqCst) {
            State::Frozen
        } else {
            State::Active
        }
    }

    pub fn approximate_bytes(&self) -> usize {
        self.approximate_bytes.load(Ordering::Relaxed)
    }

    /// Total versions across all keys.
    pub fn version_count(&self) -> u64 {
        let mut count = 0;
        self.chains.visit_from(&[], |_, chain| {
            chain.walk(|_, _| {
                count += 1;
                true
            });
            true
        });
        count
    }

    /// Writes every version of every key as a sorted run. Returns the record
    /// count. The memtable must be frozen and is left untouched on failure.
    pub fn flush<W: Write>(&self, sink: W) -> Result<u64> {
        if self.state() != State::Frozen {
            return Err(Error::NotFrozen);
        }
        let count = self.version_count();
        let mut writer = RunWriter::new(sink, count)?;
        let mut failure = None;
        self.chains.visit_from(&[], |key, chain| {
            chain.walk(|seq, value| match writer.push(key, seq, value.map(Vec::as_slice)) {
                Ok(()) => true,
                Err(e) => {
                    failure = Some(e);
                    false
                }
            });
            failure.is_none()
        });
        if let Some(e) = failure {
            return Err(e.into());
        }
        writer.finish()?;
        Ok(count)
    }

    /// Checks at quiescence that every chain is non-empty with strictly
    /// descending sequence numbers.
    pub fn check_chains(&self) -> std::result::Result<(), String> {
        let mut problem = None;
        self.chains.visit_from(&[], |key, chain| {
            let mut last: Option<SequenceNumber> = None;
            chain.walk(|seq, _| {
                if last.is_some_and(|l| l <= seq) {
                    problem = Some(format!("chain for {key:?} not descending at seq {seq}"));
                }
                last = Some(seq);
                true
            });
            if last.is_none() {
                problem = Some(format!("empty chain for {key:?}"));
            }
            problem.is_none()
        });
        problem.map_or(Ok(()), Err)
    }
}
