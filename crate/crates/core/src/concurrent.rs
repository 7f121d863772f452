//! Lock-free skiplist.
//!
//! Successor links are atomic pointers whose low tag bit is a deletion
//! mark. Membership is decided at the bottom level: an insert takes effect
//! when its bottom-level splice succeeds and a remove when it marks the
//! bottom link. Upper levels are shortcuts linked after the fact; a splice
//! that loses a race with a removal is simply abandoned. Searches that meet
//! a marked node unlink it on the way ("helping").
//!
//! Storage is reclaimed through epochs. A node is retired once both its
//! inserter has stopped touching its tower and its remover has marked it,
//! by whichever of the two finishes second, after a sweep that unlinks it
//! from every level.

use std::cmp::Ordering as KeyOrdering;
use std::sync::atomic::{AtomicU8, Ordering};

use crossbeam_epoch::{self as epoch, Atomic, Guard, Owned, Shared};

use crate::key::{Key, Value};
use crate::level::{LevelGenConfig, SharedLevelGenerator};
use crate::stats::SearchStats;
use crate::Result;

const MARK: usize = 1;
const LINKED: u8 = 1;
const REMOVED: u8 = 2;

struct Node<V> {
    key: Key,
    value: V,
    tower: Box<[Atomic<Node<V>>]>,
    state: AtomicU8,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum InsertOutcome {
    Inserted,
    AlreadyPresent,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RemoveOutcome<V> {
    Removed(V),
    Absent,
}

pub struct ConcurrentSkiplist<V = Value> {
    head: Box<[Atomic<Node<V>>]>,
    levels: SharedLevelGenerator,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Sweep {
    /// Stop at the first node whose key is not below the target.
    Search,
    /// Also unlink every marked node carrying the target key.
    Purge,
}

struct Position<'g, V> {
    preds: Vec<&'g [Atomic<Node<V>>]>,
    succs: Vec<Shared<'g, Node<V>>>,
}

impl<V> Default for ConcurrentSkiplist<V> {
    fn default() -> Self {
        Self::new()
    }
}

impl<V> ConcurrentSkiplist<V> {
    pub fn new() -> Self {
        Self::with_config(LevelGenConfig::default()).expect("default config is valid")
    }

    pub fn with_config(config: LevelGenConfig) -> Result<Self> {
        config.validate()?;
        let levels = SharedLevelGenerator::new(config);
        let head = (0..levels.max_level()).map(|_| Atomic::null()).collect();
        Ok(ConcurrentSkiplist { head, levels })
    }

    fn max_level(&self) -> usize {
        self.head.len()
    }

    /// Locates the predecessors and successors of `key` on every level,
    /// unlinking marked nodes met along the way.
    fn find<'g>(&'g self, key: &[u8], sweep: Sweep, guard: &'g Guard) -> Position<'g, V> {
        let top = self.max_level();
        'retry: loop {
            let mut preds: Vec<&'g [Atomic<Node<V>>]> = vec![&self.head[..]; top];
            let mut succs = vec![Shared::null(); top];
            let mut pred: &'g [Atomic<Node<V>>] = &self.head;
            for lvl in (0..top).rev() {
                let mut curr = pred[lvl].load(Ordering::Acquire, guard);
                if curr.tag() == MARK {
                    // pred was deleted after we stepped onto it.
                    continue 'retry;
                }
                while let Some(c) = unsafe { curr.as_ref() } {
                    let succ = c.tower[lvl].load(Ordering::Acquire, guard);
                    if succ.tag() == MARK {
                        if pred[lvl]
                            .compare_exchange(curr, succ.with_tag(0), Ordering::AcqRel, Ordering::Acquire, guard)
                            .is_err()
                        {
                            continue 'retry;
                        }
                        curr = succ.with_tag(0);
                    } else if c.key.as_slice() < key {
                        pred = &c.tower;
                        curr = succ;
                    } else {
                        break;
                    }
                }
                if sweep == Sweep::Purge && !self.purge_run(pred, lvl, key, guard) {
                    continue 'retry;
                }
                preds[lvl] = pred;
                succs[lvl] = curr;
            }
            return Position { preds, succs };
        }
    }

    /// Unlinks marked nodes among the run of nodes equal to `key` that
    /// follows `pred` on `lvl`. Returns false when a race forces a restart.
    fn purge_run(&self, pred: &[Atomic<Node<V>>], lvl: usize, key: &[u8], guard: &Guard) -> bool {
        let mut pred = pred;
        let mut curr = pred[lvl].load(Ordering::Acquire, guard);
        if curr.tag() == MARK {
            return false;
        }
        while let Some(c) = unsafe { curr.as_ref() } {
            if c.key.as_slice() != key {
                break;
            }
            let succ = c.tower[lvl].load(Ordering::Acquire, guard);
            if succ.tag() == MARK {
                if pred[lvl]
                    .compare_exchange(curr, succ.with_tag(0), Ordering::AcqRel, Ordering::Acquire, guard)
                    .is_err()
                {
                    return false;
                }
                curr = succ.with_tag(0);
            } else {
                pred = &c.tower;
                curr = succ;
            }
        }
        true
    }

    /// Read-only descent that skips marked nodes without unlinking them.
    /// Returns the first unmarked bottom-level node with key `>= key`.
    fn seek<'g>(&'g self, key: &[u8], stats: &mut SearchStats, guard: &'g Guard) -> Shared<'g, Node<V>> {
        let mut pred: &'g [Atomic<Node<V>>] = &self.head;
        let mut curr = Shared::null();
        for lvl in (0..self.max_level()).rev() {
            curr = pred[lvl].load(Ordering::Acquire, guard).with_tag(0);
            while let Some(c) = unsafe { curr.as_ref() } {
                let succ = c.tower[lvl].load(Ordering::Acquire, guard);
                if succ.tag() == MARK {
                    curr = succ.with_tag(0);
                    continue;
                }
                stats.compare();
                match c.key.as_slice().cmp(key) {
                    KeyOrdering::Less => {
                        stats.traverse();
                        pred = &c.tower;
                        curr = succ;
                    }
                    KeyOrdering::Equal => {
                        stats.traverse();
                        return curr;
                    }
                    KeyOrdering::Greater => break,
                }
            }
        }
        curr
    }

    fn seek_exact<'g>(&'g self, key: &[u8], stats: &mut SearchStats, guard: &'g Guard) -> Option<&'g Node<V>> {
        let node = unsafe { self.seek(key, stats, guard).as_ref() }?;
        let live = node.tower[0].load(Ordering::Acquire, guard).tag() != MARK;
        (live && node.key.as_slice() == key).then_some(node)
    }

    pub fn insert(&self, key: Key, value: V) -> InsertOutcome {
        self.insert_with(key, || value, |_| ()).1
    }

    /// Inserts `make()` unless `key` is present, then passes the value
    /// stored under `key` to `visit`.
    pub fn get_or_insert_with<R>(&self, key: Key, make: impl FnOnce() -> V, visit: impl FnOnce(&V) -> R) -> R {
        self.insert_with(key, make, visit).0
    }

    fn insert_with<R>(&self, key: Key, make: impl FnOnce() -> V, visit: impl FnOnce(&V) -> R) -> (R, InsertOutcome) {
        let guard = &epoch::pin();
        let mut make = Some(make);
        let mut owned: Option<Owned<Node<V>>> = None;
        let (node, mut pos) = loop {
            let pos = self.find(&key, Sweep::Search, guard);
            if let Some(existing) = unsafe { pos.succs[0].as_ref() } {
                if existing.key == key {
                    return (visit(&existing.value), InsertOutcome::AlreadyPresent);
                }
            }
            let new = owned.take().unwrap_or_else(|| {
                let height = self.levels.random_height();
                Owned::new(Node {
                    key: key.clone(),
                    value: (make.take().expect("value built once"))(),
                    tower: (0..height).map(|_| Atomic::null()).collect(),
                    state: AtomicU8::new(0),
                })
            });
            for (lvl, link) in new.tower.iter().enumerate() {
                link.store(pos.succs[lvl], Ordering::Relaxed);
            }
            match pos.preds[0][0].compare_exchange(pos.succs[0], new, Ordering::AcqRel, Ordering::Acquire, guard) {
                Ok(shared) => break (shared, pos),
                Err(err) => owned = Some(err.new),
            }
        };

        let n = unsafe { node.deref() };
        let result = visit(&n.value);
        'levels: for lvl in 1..n.tower.len() {
            loop {
                let succ = pos.succs[lvl];
                let cur = n.tower[lvl].load(Ordering::Acquire, guard);
                if cur.tag() == MARK {
                    break 'levels;
                }
                if cur != succ
                    && n.tower[lvl]
                        .compare_exchange(cur, succ, Ordering::AcqRel, Ordering::Acquire, guard)
                        .is_err()
                {
                    break 'levels;
                }
                if pos.preds[lvl][lvl]
                    .compare_exchange(succ, node, Ordering::AcqRel, Ordering::Acquire, guard)
                    .is_ok()
                {
                    break;
                }
                pos = self.find(&key, Sweep::Search, guard);
                if pos.succs[0] != node {
                    break 'levels;
                }
            }
        }
        if n.state.fetch_or(LINKED, Ordering::AcqRel) & REMOVED != 0 {
            self.retire(node, guard);
        }
        (result, InsertOutcome::Inserted)
    }

    pub fn remove(&self, key: &[u8]) -> RemoveOutcome<V>
    where
        V: Clone,
    {
        let guard = &epoch::pin();
        let pos = self.find(key, Sweep::Search, guard);
        let node = pos.succs[0];
        let Some(n) = (unsafe { node.as_ref() }) else {
            return RemoveOutcome::Absent;
        };
        if n.key.as_slice() != key {
            return RemoveOutcome::Absent;
        }
        for lvl in (1..n.tower.len()).rev() {
            n.tower[lvl].fetch_or(MARK, Ordering::AcqRel, guard);
        }
        if n.tower[0].fetch_or(MARK, Ordering::AcqRel, guard).tag() == MARK {
            // Another remover got there first.
            return RemoveOutcome::Absent;
        }
        let value = n.value.clone();
        if n.state.fetch_or(REMOVED, Ordering::AcqRel) & LINKED != 0 {
            self.retire(node, guard);
        } else {
            self.find(key, Sweep::Search, guard);
        }
        RemoveOutcome::Removed(value)
    }

    /// Unlinks a fully marked node from every level and schedules its
    /// destruction. Runs exactly once per removed node.
    fn retire(&self, node: Shared<'_, Node<V>>, guard: &Guard) {
        let n = unsafe { node.deref() };
        self.find(&n.key, Sweep::Purge, guard);
        unsafe { guard.defer_destroy(node) };
    }

    pub fn contains(&self, key: &[u8]) -> bool {
        let guard = &epoch::pin();
        self.seek_exact(key, &mut SearchStats::default(), guard).is_some()
    }

    pub fn get(&self, key: &[u8]) -> Option<V>
    where
        V: Clone,
    {
        self.visit(key, V::clone)
    }

    pub fn get_traced(&self, key: &[u8]) -> (Option<V>, SearchStats)
    where
        V: Clone,
    {
        let guard = &epoch::pin();
        let mut stats = SearchStats::default();
        let value = self.seek_exact(key, &mut stats, guard).map(|n| n.value.clone());
        (value, stats)
    }

    /// Applies `f` to the value under `key`, if present.
    pub fn visit<R>(&self, key: &[u8], f: impl FnOnce(&V) -> R) -> Option<R> {
        self.visit_traced(key, f).0
    }

    pub fn visit_traced<R>(&self, key: &[u8], f: impl FnOnce(&V) -> R) -> (Option<R>, SearchStats) {
        let guard = &epoch::pin();
        let mut stats = SearchStats::default();
        let out = self.seek_exact(key, &mut stats, guard).map(|n| f(&n.value));
        (out, stats)
    }

    /// Weakly consistent ascending iteration over live entries.
    pub fn iter(&self) -> Iter<'_, V> {
        let guard = epoch::pin();
        let first = self.head[0].load(Ordering::Acquire, &guard).as_raw();
        Iter {
            _list: self,
            guard,
            next: first,
        }
    }

    /// Weakly consistent ascending iteration starting at the first key
    /// `>= lo`.
    pub fn iter_from(&self, lo: &[u8]) -> Iter<'_, V> {
        let guard = epoch::pin();
        let first = self.seek(lo, &mut SearchStats::default(), &guard).as_raw();
        Iter {
            _list: self,
            guard,
            next: first,
        }
    }

    /// Visits live entries with key `>= lo` in ascending order until `f`
    /// returns false. Weakly consistent, like [`Self::iter`].
    pub fn visit_from(&self, lo: &[u8], mut f: impl FnMut(&Key, &V) -> bool) {
        let guard = &epoch::pin();
        let mut curr = self.seek(lo, &mut SearchStats::default(), guard);
        while let Some(c) = unsafe { curr.as_ref() } {
            let succ = c.tower[0].load(Ordering::Acquire, guard);
            if succ.tag() != MARK && !f(&c.key, &c.value) {
                return;
            }
            curr = succ.with_tag(0);
        }
    }

    /// Live entry count by a bottom-level walk. Exact only at quiescence.
    pub fn len(&self) -> usize {
        let mut count = 0;
        self.visit_from(&[], |_, _| {
            count += 1;
            true
        });
        count
    }

    pub fn is_empty(&self) -> bool {
        let mut empty = true;
        self.visit_from(&[], |_, _| {
            empty = false;
            false
        });
        empty
    }

    /// Quiescent structural check: the bottom level is strictly ascending
    /// with no marked nodes, and every upper level is an ascending
    /// subsequence of it. Only meaningful with no operations in flight.
    pub fn check_quiescent(&self) -> std::result::Result<(), String> {
        let guard = &epoch::pin();
        let mut bottom = Vec::new();
        let mut curr = self.head[0].load(Ordering::Acquire, guard);
        while let Some(c) = unsafe { curr.as_ref() } {
            let succ = c.tower[0].load(Ordering::Acquire, guard);
            if succ.tag() == MARK {
                return Err(format!("marked node {:?} still linked", c.key));
            }
            if bottom.last().is_some_and(|&(k, _): &(&Key, _)| k >= &c.key) {
                return Err(format!("bottom level out of order at {:?}", c.key));
            }
            bottom.push((&c.key, curr.as_raw()));
            curr = succ;
        }
        for lvl in 1..self.max_level() {
            let mut cursor = bottom.iter();
            let mut curr = self.head[lvl].load(Ordering::Acquire, guard);
            while let Some(c) = unsafe { curr.as_ref() } {
                if !cursor.any(|&(_, ptr)| ptr == curr.as_raw()) {
                    return Err(format!("level {lvl} node {:?} not in bottom order", c.key));
                }
                curr = c.tower[lvl].load(Ordering::Acquire, guard);
            }
        }
        Ok(())
    }
}

impl<V> Drop for ConcurrentSkiplist<V> {
    fn drop(&mut self) {
        // Exclusive access: every removed node has already been retired and
        // unlinked, so the bottom level owns exactly the remaining nodes.
        unsafe {
            let guard = epoch::unprotected();
            let mut curr = self.head[0].load(Ordering::Relaxed, guard);
            while !curr.is_null() {
                let next = curr.deref().tower[0].load(Ordering::Relaxed, guard);
                drop(curr.into_owned());
                curr = next.with_tag(0);
            }
        }
    }
}

pub struct Iter<'a, V> {
    _list: &'a ConcurrentSkiplist<V>,
    guard: Guard,
    next: *const Node<V>,
}

impl<V: Clone> Iterator for Iter<'_, V> {
    type Item = (Key, V);

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            // The pinned guard keeps every node reachable from here alive.
            let node = unsafe { self.next.as_ref() }?;
            let succ = node.tower[0].load(Ordering::Acquire, &self.guard);
            self.next = succ.with_tag(0).as_raw();
            if succ.tag() != MARK {
                return Some((node.key.clone(), node.value.clone()));
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::key::encode_u64;
    use std::sync::Arc;
    use std::thread;

    #[test]
    fn empty() {
        let list: ConcurrentSkiplist = ConcurrentSkiplist::new();
        assert_eq!(list.get(b"a"), None);
        assert_eq!(list.remove(b"a"), RemoveOutcome::Absent);
        assert!(list.is_empty());
    }

    #[test]
    fn single_actor_basics() {
        let list: ConcurrentSkiplist = ConcurrentSkiplist::new();
        assert_eq!(list.insert(b"k".to_vec(), b"1".to_vec()), InsertOutcome::Inserted);
        assert_eq!(list.insert(b"k".to_vec(), b"2".to_vec()), InsertOutcome::AlreadyPresent);
        assert_eq!(list.get(b"k"), Some(b"1".to_vec()));
        assert_eq!(list.remove(b"k"), RemoveOutcome::Removed(b"1".to_vec()));
        assert_eq!(list.get(b"k"), None);
        assert_eq!(list.insert(b"k".to_vec(), b"3".to_vec()), InsertOutcome::Inserted);
        assert_eq!(list.get(b"k"), Some(b"3".to_vec()));
    }

    #[test]
    fn iteration_sorted() {
        let list: ConcurrentSkiplist<u64> = ConcurrentSkiplist::new();
        for n in [5u64, 1, 9, 3, 7] {
            list.insert(encode_u64(n), n);
        }
        list.remove(&encode_u64(3));
        let got: Vec<u64> = list.iter().map(|(_, v)| v).collect();
        assert_eq!(got, vec![1, 5, 7, 9]);
        let tail: Vec<u64> = list.iter_from(&encode_u64(6)).map(|(_, v)| v).collect();
        assert_eq!(tail, vec![7, 9]);
        list.check_quiescent().unwrap();
    }

    #[test]
    fn racing_removes_one_winner() {
        for trial in 0..200u64 {
            let list: Arc<ConcurrentSkiplist<u64>> = Arc::new(ConcurrentSkiplist::new());
            list.insert(encode_u64(trial), trial);
            let handles: Vec<_> = (0..4)
                .map(|_| {
                    let list = Arc::clone(&list);
                    thread::spawn(move || matches!(list.remove(&encode_u64(trial)), RemoveOutcome::Removed(_)))
                })
                .collect();
            let wins = handles.into_iter().map(|h| h.join().unwrap()).filter(|&w| w).count();
            assert_eq!(wins, 1);
        }
    }
}
