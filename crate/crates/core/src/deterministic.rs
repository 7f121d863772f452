//! Deterministic 1-2-3 skiplist.
//!
//! Between any two consecutive nodes of height `>= h` (the head counts as
//! infinitely tall and the end of a level as a terminator) there are one to
//! three nodes of height exactly `h - 1`. Both insert and remove restore the
//! invariant in a single top-down pass: insert splits a full gap before
//! descending into it by raising its middle node, remove widens a singleton
//! gap before descending into it by borrowing from a sibling gap or merging
//! with one. Search cost is therefore worst-case logarithmic and no
//! randomness is involved anywhere.

use std::cmp::Ordering;
use std::fmt;

use crate::key::{Key, Value};
use crate::stats::SearchStats;
use crate::{Error, OrderedMap, Result};

const HEAD: usize = 0;

#[derive(Debug, Clone)]
struct Node {
    key: Key,
    value: Value,
    next: Vec<Option<usize>>,
}

impl Node {
    fn height(&self) -> usize {
        self.next.len()
    }
}

#[derive(Debug, Clone)]
pub struct DetSkiplist {
    nodes: Vec<Node>,
    free: Vec<usize>,
    len: usize,
}

/// One failed structural check.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    /// A gap at link level `level` (holding nodes of height `level + 1`)
    /// has `count` members. `after` is the key of the gap's left boundary,
    /// `None` for the head.
    Gap {
        level: usize,
        after: Option<Key>,
        count: usize,
    },
    Unsorted { key: Key },
    HeightBound { height: usize, size: usize },
    Structure(String),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Gap { level, after, count } => match after {
                Some(k) => write!(f, "level {level}: gap after key {k:?} holds {count} nodes"),
                None => write!(f, "level {level}: gap after head holds {count} nodes"),
            },
            Violation::Unsorted { key } => write!(f, "bottom level out of order at {key:?}"),
            Violation::HeightBound { height, size } => {
                write!(f, "height {height} exceeds bound for {size} keys")
            }
            Violation::Structure(msg) => f.write_str(msg),
        }
    }
}

/// Outcome of [`DetSkiplist::check_invariants`].
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct InvariantReport {
    pub violations: Vec<Violation>,
}

impl InvariantReport {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }
}

impl Default for DetSkiplist {
    fn default() -> Self {
        Self::new()
    }
}

impl PartialEq for DetSkiplist {
    /// Structural equality: same keys, values and tower heights. The links
    /// of a skiplist are fully determined by those.
    fn eq(&self, other: &Self) -> bool {
        self.len == other.len && self.towers().eq(other.towers())
    }
}

impl DetSkiplist {
    pub fn new() -> Self {
        DetSkiplist {
            nodes: vec![Node {
                key: Vec::new(),
                value: Vec::new(),
                next: Vec::new(),
            }],
            free: Vec::new(),
            len: 0,
        }
    }

    /// Builds a list with exactly the given towers, which must be strictly
    /// ascending by key with heights of at least 1. The gap invariant is not
    /// enforced; use [`DetSkiplist::check_invariants`] to validate.
    pub fn from_towers<I>(towers: I) -> Result<Self>
    where
        I: IntoIterator<Item = (Key, Value, usize)>,
    {
        let mut list = DetSkiplist::new();
        let mut last: Vec<usize> = Vec::new();
        for (key, value, height) in towers {
            if height == 0 {
                return Err(Error::InvalidInput(format!("zero height for key {key:?}")));
            }
            if list.len > 0 {
                let prev = &list.nodes[last[0]].key;
                if prev.as_slice() >= key.as_slice() {
                    return Err(Error::InvalidInput(format!("key {key:?} out of order")));
                }
            }
            let node = list.alloc(Node {
                key,
                value,
                next: vec![None; height],
            });
            while list.nodes[HEAD].next.len() < height {
                list.nodes[HEAD].next.push(None);
            }
            while last.len() < height {
                last.push(HEAD);
            }
            for (lvl, pred) in last.iter_mut().enumerate().take(height) {
                list.nodes[*pred].next[lvl] = Some(node);
                *pred = node;
            }
            list.len += 1;
        }
        Ok(list)
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Number of levels, reported as 1 for an empty list.
    pub fn height(&self) -> usize {
        self.levels().max(1)
    }

    fn levels(&self) -> usize {
        self.nodes[HEAD].next.len()
    }

    fn alloc(&mut self, node: Node) -> usize {
        match self.free.pop() {
            Some(slot) => {
                self.nodes[slot] = node;
                slot
            }
            None => {
                self.nodes.push(node);
                self.nodes.len() - 1
            }
        }
    }

    fn release(&mut self, slot: usize) -> Node {
        self.free.push(slot);
        std::mem::replace(
            &mut self.nodes[slot],
            Node {
                key: Vec::new(),
                value: Vec::new(),
                next: Vec::new(),
            },
        )
    }

    fn next(&self, node: usize, lvl: usize) -> Option<usize> {
        self.nodes[node].next[lvl]
    }

    fn height_of(&self, node: usize) -> usize {
        self.nodes[node].height()
    }

    /// Moves right along `lvl` while the successor's key is below `key`.
    fn advance(&self, mut x: usize, lvl: usize, key: &[u8]) -> usize {
        while let Some(n) = self.next(x, lvl) {
            if self.nodes[n].key.as_slice() < key {
                x = n;
            } else {
                break;
            }
        }
        x
    }

    /// Like [`Self::advance`] but also returns the predecessor of the final
    /// node on that level (`None` when no step was taken).
    fn advance_with_pred(&self, mut x: usize, mut pred: Option<usize>, lvl: usize, key: &[u8]) -> (usize, Option<usize>) {
        while let Some(n) = self.next(x, lvl) {
            if self.nodes[n].key.as_slice() < key {
                pred = Some(x);
                x = n;
            } else {
                break;
            }
        }
        (x, pred)
    }

    /// Members of the gap on link level `lvl` starting after `from` and
    /// ending before `bound`.
    fn gap(&self, from: usize, lvl: usize, bound: Option<usize>) -> Vec<usize> {
        let mut out = Vec::new();
        let mut cursor = self.next(from, lvl);
        while cursor != bound {
            let n = cursor.expect("gap bound lies on this level");
            out.push(n);
            cursor = self.next(n, lvl);
        }
        out
    }

    fn gap_len(&self, from: usize, lvl: usize, bound: Option<usize>) -> usize {
        let mut count = 0;
        let mut cursor = self.next(from, lvl);
        while cursor != bound {
            count += 1;
            cursor = self.next(cursor.expect("gap bound lies on this level"), lvl);
        }
        count
    }

    pub fn insert(&mut self, key: Key, value: Value) -> Option<Value> {
        if self.len == 0 {
            let node = self.alloc(Node {
                key,
                value,
                next: vec![None],
            });
            self.nodes[HEAD].next = vec![Some(node)];
            self.len = 1;
            return None;
        }

        let top = self.levels() - 1;
        let root = self.gap(HEAD, top, None);
        if root.len() == 3 {
            let mid = root[1];
            self.nodes[mid].next.push(None);
            self.nodes[HEAD].next.push(Some(mid));
        }

        let mut x = HEAD;
        for lvl in (1..self.levels()).rev() {
            x = self.advance(x, lvl, &key);
            let bound = self.next(x, lvl);
            let below = self.gap(x, lvl - 1, bound);
            if below.len() == 3 {
                let mid = below[1];
                self.nodes[mid].next.push(bound);
                self.nodes[x].next[lvl] = Some(mid);
                if self.nodes[mid].key < key {
                    x = mid;
                }
            }
        }

        x = self.advance(x, 0, &key);
        if let Some(n) = self.next(x, 0) {
            if self.nodes[n].key == key {
                return Some(std::mem::replace(&mut self.nodes[n].value, value));
            }
        }
        let after = self.next(x, 0);
        let node = self.alloc(Node {
            key,
            value,
            next: vec![after],
        });
        self.nodes[x].next[0] = Some(node);
        self.len += 1;
        None
    }

    pub fn remove(&mut self, key: &[u8]) -> Option<Value> {
        if self.len == 0 {
            return None;
        }

        let mut x = HEAD;
        let mut lvl = self.levels() - 1;
        while lvl >= 1 {
            let (mut at, pred) = self.advance_with_pred(x, None, lvl, key);
            let bound = self.next(at, lvl);
            if self.gap_len(at, lvl - 1, bound) == 1 {
                at = self.widen_gap(at, pred, lvl, bound);
                if lvl == self.levels() - 1 && self.nodes[HEAD].next[lvl].is_none() {
                    // The only root node was merged down.
                    self.nodes[HEAD].next.pop();
                    debug_assert_eq!(at, HEAD);
                }
            }
            x = at;
            lvl -= 1;
        }

        let (x, pred) = self.advance_with_pred(x, None, 0, key);
        let target = self.next(x, 0)?;
        if self.nodes[target].key.as_slice() != key {
            return None;
        }

        let removed = if self.height_of(target) == 1 {
            self.nodes[x].next[0] = self.nodes[target].next[0];
            self.release(target).value
        } else {
            // An interior key: pull its bottom-level predecessor up into
            // its place and drop the predecessor instead.
            debug_assert!(x != HEAD && self.height_of(x) == 1);
            let pred = pred.expect("predecessor of a leaf gap member");
            self.nodes[pred].next[0] = self.nodes[x].next[0];
            let leaf = self.release(x);
            let node = &mut self.nodes[target];
            node.key = leaf.key;
            std::mem::replace(&mut node.value, leaf.value)
        };

        self.len -= 1;
        if self.len == 0 {
            self.nodes[HEAD].next.clear();
        }
        Some(removed)
    }

    /// Grows the singleton gap under `x` on level `lvl - 1` to at least two
    /// members. Returns the node whose gap now contains the search path.
    fn widen_gap(&mut self, x: usize, pred: Option<usize>, lvl: usize, bound: Option<usize>) -> usize {
        let right = bound.filter(|&z| self.height_of(z) == lvl + 1);
        let left = (x != HEAD && self.height_of(x) == lvl + 1).then_some(x);

        if let Some(z) = right {
            let after = self.next(z, lvl);
            if self.gap_len(z, lvl - 1, after) >= 2 {
                // Rotate: z drops into our gap, the first of its gap rises.
                let w = self.next(z, lvl - 1).expect("non-empty sibling gap");
                self.nodes[z].next.pop();
                self.nodes[w].next.push(after);
                self.nodes[x].next[lvl] = Some(w);
                return x;
            }
        }
        if let Some(sep) = left {
            let p = pred.expect("a separator has a predecessor on its level");
            let sibling = self.gap(p, lvl - 1, Some(sep));
            if sibling.len() >= 2 {
                // Rotate: sep drops into our gap, the last of its gap rises.
                let v = *sibling.last().expect("non-empty sibling gap");
                self.nodes[sep].next.pop();
                self.nodes[v].next.push(bound);
                self.nodes[p].next[lvl] = Some(v);
                return v;
            }
        }
        if let Some(z) = right {
            self.nodes[x].next[lvl] = self.nodes[z].next.pop().expect("tower of z");
            return x;
        }
        if let Some(sep) = left {
            let p = pred.expect("a separator has a predecessor on its level");
            self.nodes[p].next[lvl] = self.nodes[sep].next.pop().expect("tower of sep");
            return p;
        }
        unreachable!("a gap below a non-root level always has a sibling")
    }

    pub fn get(&self, key: &[u8]) -> Option<&Value> {
        self.locate(key, &mut SearchStats::default())
            .map(|n| &self.nodes[n].value)
    }

    pub fn get_traced(&self, key: &[u8]) -> (Option<&Value>, SearchStats) {
        let mut stats = SearchStats::default();
        let found = self.locate(key, &mut stats).map(|n| &self.nodes[n].value);
        (found, stats)
    }

    fn locate(&self, key: &[u8], stats: &mut SearchStats) -> Option<usize> {
        let mut x = HEAD;
        let mut bound = None;
        for lvl in (0..self.levels()).rev() {
            loop {
                let n = self.next(x, lvl);
                if n == bound {
                    break;
                }
                let n = n?;
                stats.compare();
                match self.nodes[n].key.as_slice().cmp(key) {
                    Ordering::Less => {
                        stats.traverse();
                        x = n;
                    }
                    Ordering::Equal => {
                        stats.traverse();
                        return Some(n);
                    }
                    Ordering::Greater => {
                        bound = Some(n);
                        break;
                    }
                }
            }
        }
        None
    }

    pub fn range_scan(&self, lo: &[u8], hi: &[u8]) -> Result<Vec<(Key, Value)>> {
        if lo > hi {
            return Err(Error::InvalidRange);
        }
        let mut x = HEAD;
        for lvl in (0..self.levels()).rev() {
            x = self.advance(x, lvl, lo);
        }
        let mut out = Vec::new();
        let mut cursor = if self.levels() == 0 { None } else { self.next(x, 0) };
        while let Some(n) = cursor {
            let node = &self.nodes[n];
            if node.key.as_slice() > hi {
                break;
            }
            out.push((node.key.clone(), node.value.clone()));
            cursor = node.next[0];
        }
        Ok(out)
    }

    fn bottom(&self) -> impl Iterator<Item = usize> + '_ {
        let mut cursor = self.nodes[HEAD].next.first().copied().flatten();
        std::iter::from_fn(move || {
            let n = cursor?;
            cursor = self.nodes[n].next[0];
            Some(n)
        })
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Key, &Value)> + '_ {
        self.bottom().map(|n| (&self.nodes[n].key, &self.nodes[n].value))
    }

    /// `(key, value, height)` for every node in ascending key order.
    pub fn towers(&self) -> impl Iterator<Item = (&Key, &Value, usize)> + '_ {
        self.bottom()
            .map(|n| (&self.nodes[n].key, &self.nodes[n].value, self.nodes[n].height()))
    }

    /// Validates sortedness, link consistency, the gap invariant on every
    /// level and the height bound. Never mutates.
    pub fn check_invariants(&self) -> InvariantReport {
        let mut violations = Vec::new();
        let bottom: Vec<usize> = self.bottom().take(self.len + 1).collect();
        if bottom.len() != self.len {
            violations.push(Violation::Structure(format!(
                "size {} but {} nodes reachable",
                self.len,
                bottom.len()
            )));
        }
        for pair in bottom.windows(2) {
            if self.nodes[pair[0]].key >= self.nodes[pair[1]].key {
                violations.push(Violation::Unsorted {
                    key: self.nodes[pair[1]].key.clone(),
                });
            }
        }

        let levels = self.levels();
        let max_height = bottom.iter().map(|&n| self.height_of(n)).max().unwrap_or(0);
        if max_height != levels {
            violations.push(Violation::Structure(format!(
                "head spans {levels} levels but tallest node has height {max_height}"
            )));
        }
        for lvl in 1..levels {
            let expected: Vec<usize> = bottom.iter().copied().filter(|&n| self.height_of(n) > lvl).collect();
            let mut actual = Vec::new();
            let mut cursor = self.next(HEAD, lvl);
            while let Some(n) = cursor {
                if actual.len() > bottom.len() {
                    break;
                }
                actual.push(n);
                cursor = self.nodes[n].next.get(lvl).copied().flatten();
            }
            if expected != actual {
                violations.push(Violation::Structure(format!(
                    "level {lvl} does not list exactly the taller nodes"
                )));
            }
        }

        // Gaps holding nodes of height h - 1 sit between consecutive nodes of
        // height >= h; the head and the end of the level bound every gap.
        for h in 2..=levels + 1 {
            let mut left: Option<usize> = None;
            let mut count = 0;
            let check = |left: Option<usize>, count: usize, violations: &mut Vec<Violation>| {
                if !(1..=3).contains(&count) {
                    violations.push(Violation::Gap {
                        level: h - 2,
                        after: left.map(|n| self.nodes[n].key.clone()),
                        count,
                    });
                }
            };
            for &n in &bottom {
                let ht = self.height_of(n);
                if ht >= h {
                    check(left, count, &mut violations);
                    left = Some(n);
                    count = 0;
                } else if ht == h - 1 {
                    count += 1;
                }
            }
            check(left, count, &mut violations);
        }

        if self.len >= 1 {
            let bound = self.len.ilog2() as usize + 1;
            if levels > bound {
                violations.push(Violation::HeightBound {
                    height: levels,
                    size: self.len,
                });
            }
        }
        InvariantReport { violations }
    }
}

impl OrderedMap for DetSkiplist {
    fn insert(&mut self, key: Key, value: Value) -> Option<Value> {
        DetSkiplist::insert(self, key, value)
    }

    fn get(&mut self, key: &[u8]) -> Option<Value> {
        DetSkiplist::get(self, key).cloned()
    }

    fn get_traced(&mut self, key: &[u8]) -> (Option<Value>, SearchStats) {
        let (value, stats) = DetSkiplist::get_traced(self, key);
        (value.cloned(), stats)
    }

    fn remove(&mut self, key: &[u8]) -> Option<Value> {
        DetSkiplist::remove(self, key)
    }

    fn range_scan(&mut self, lo: &[u8], hi: &[u8]) -> Result<Vec<(Key, Value)>> {
        DetSkiplist::range_scan(self, lo, hi)
    }

    fn len(&self) -> usize {
        self.len
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::key::encode_u64;
    use crate::level::XorShift64Star;
    use std::collections::BTreeMap;

    fn k(n: u64) -> Key {
        encode_u64(n)
    }

    #[test]
    fn single_key() {
        let mut list = DetSkiplist::new();
        assert_eq!(list.get(&k(1)), None);
        assert_eq!(list.remove(&k(1)), None);
        assert!(list.check_invariants().ok());
        list.insert(k(1), b"v".to_vec());
        assert_eq!((list.len(), list.height()), (1, 1));
        assert!(list.check_invariants().ok());
    }

    #[test]
    fn sequential_fill_and_drain() {
        let mut list = DetSkiplist::new();
        for n in 1..=100 {
            list.insert(k(n), Vec::new());
            assert!(list.check_invariants().ok(), "after insert {n}: {:?}", list.check_invariants());
        }
        for n in 1..=100 {
            assert_eq!(list.remove(&k(n)), Some(Vec::new()));
            assert!(list.check_invariants().ok(), "after remove {n}: {:?}", list.check_invariants());
        }
        assert!(list.is_empty());
        assert_eq!(list.height(), 1);
    }

    #[test]
    fn reverse_drain() {
        let mut list = DetSkiplist::new();
        for n in 0..300 {
            list.insert(k(n), Vec::new());
        }
        for n in (0..300).rev() {
            assert!(list.remove(&k(n)).is_some());
            assert!(list.check_invariants().ok(), "after remove {n}");
        }
    }

    #[test]
    fn randomized_against_oracle() {
        let mut list = DetSkiplist::new();
        let mut oracle = BTreeMap::new();
        let mut rng = XorShift64Star::new(77);
        for i in 0..30_000u64 {
            let key = k(rng.next_u64() % 700);
            match rng.next_u64() % 3 {
                0 | 1 => assert_eq!(list.insert(key.clone(), k(i)), oracle.insert(key, k(i))),
                _ => assert_eq!(list.remove(&key), oracle.remove(&key)),
            }
            if i % 101 == 0 {
                let report = list.check_invariants();
                assert!(report.ok(), "step {i}: {:?}", report.violations);
            }
        }
        assert!(list.iter().map(|(k, v)| (k.clone(), v.clone())).eq(oracle.into_iter()));
    }

    #[test]
    fn corrupted_four_gap_is_reported() {
        let towers = vec![
            (k(1), Vec::new(), 1),
            (k(2), Vec::new(), 1),
            (k(3), Vec::new(), 1),
            (k(4), Vec::new(), 1),
            (k(5), Vec::new(), 2),
            (k(6), Vec::new(), 1),
        ];
        let list = DetSkiplist::from_towers(towers).unwrap();
        let report = list.check_invariants();
        assert!(report.violations.contains(&Violation::Gap {
            level: 0,
            after: None,
            count: 4
        }));
        let text = report.violations[0].to_string();
        assert!(text.contains("level 0"), "{text}");
    }

    #[test]
    fn from_towers_rejects_unsorted() {
        let towers = vec![(k(2), Vec::new(), 1), (k(1), Vec::new(), 1)];
        assert!(matches!(DetSkiplist::from_towers(towers), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn bulk_load_search_bound() {
        let mut list = DetSkiplist::new();
        for n in 0..1024 {
            list.insert(k(n * 7 % 1024), Vec::new());
        }
        for n in 0..1024 {
            let (v, stats) = list.get_traced(&k(n));
            assert!(v.is_some());
            assert!(stats.comparisons <= 4 * 10 + 8, "key {n}: {stats:?}");
        }
    }

    #[test]
    fn same_operations_same_structure() {
        let build = || {
            let mut list = DetSkiplist::new();
            let mut rng = XorShift64Star::new(5);
            for _ in 0..5000 {
                let key = k(rng.next_u64() % 2000);
                if rng.next_u64() % 4 == 0 {
                    list.remove(&key);
                } else {
                    list.insert(key, Vec::new());
                }
            }
            list
        };
        assert!(build() == build());
    }

    #[test]
    fn range_scan_matches_filter() {
        let mut list = DetSkiplist::new();
        for n in (0..200).step_by(2) {
            list.insert(k(n), k(n));
        }
        let got: Vec<Key> = list.range_scan(&k(11), &k(20)).unwrap().into_iter().map(|e| e.0).collect();
        assert_eq!(got, vec![k(12), k(14), k(16), k(18), k(20)]);
        assert!(matches!(list.range_scan(&k(3), &k(1)), Err(Error::InvalidRange)));
    }
}
