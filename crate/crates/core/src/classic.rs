//! Probabilistic skiplist with an optional unrolled node layout.
//!
//! Every node stores between one and `node_capacity` keys in ascending order
//! and owns one tower of successor links. With a capacity of 1 this is the
//! textbook skiplist; larger capacities group consecutive keys per node and
//! keep each node (except possibly the last) between `ceil(B/2)` and `B`
//! keys full by splitting, borrowing and merging.
//!
//! Nodes live in an arena; slot 0 is the head tower.

use std::cmp::Ordering;

use crate::key::{Key, Value};
use crate::level::{LevelGenConfig, LevelGenerator};
use crate::stats::SearchStats;
use crate::{Error, OrderedMap, Result};

const HEAD: usize = 0;

#[derive(Debug, Clone)]
struct Node {
    keys: Vec<Key>,
    values: Vec<Value>,
    next: Vec<Option<usize>>,
}

impl Node {
    fn first_key(&self) -> &[u8] {
        &self.keys[0]
    }

    fn height(&self) -> usize {
        self.next.len()
    }
}

#[derive(Debug, Clone)]
pub struct ClassicSkiplist {
    nodes: Vec<Node>,
    free: Vec<usize>,
    level_gen: LevelGenerator,
    capacity: usize,
    len: usize,
    // Number of levels currently in use, at least 1.
    level: usize,
}

impl Default for ClassicSkiplist {
    fn default() -> Self {
        Self::new(LevelGenConfig::default())
    }
}

impl ClassicSkiplist {
    pub fn new(config: LevelGenConfig) -> Self {
        Self::with_node_capacity(config, 1)
    }

    /// Creates an unrolled skiplist storing up to `node_capacity` keys per
    /// node. A capacity of 0 is treated as 1.
    pub fn with_node_capacity(config: LevelGenConfig, node_capacity: usize) -> Self {
        let level_gen = LevelGenerator::new(config);
        let head = Node {
            keys: Vec::new(),
            values: Vec::new(),
            next: vec![None; level_gen.max_level()],
        };
        ClassicSkiplist {
            nodes: vec![head],
            free: Vec::new(),
            level_gen,
            capacity: node_capacity.max(1),
            len: 0,
            level: 1,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn node_capacity(&self) -> usize {
        self.capacity
    }

    fn min_fill(&self) -> usize {
        self.capacity.div_ceil(2)
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

    fn release(&mut self, slot: usize) {
        let node = &mut self.nodes[slot];
        node.keys = Vec::new();
        node.values = Vec::new();
        node.next = Vec::new();
        self.free.push(slot);
    }

    /// Fills `update[l]` with the last node at level `l` whose first key is
    /// strictly less than `key` (the head when there is none).
    fn descend(&self, key: &[u8], update: &mut [usize]) {
        let mut x = HEAD;
        for lvl in (0..self.level).rev() {
            while let Some(n) = self.nodes[x].next[lvl] {
                if self.nodes[n].first_key() < key {
                    x = n;
                } else {
                    break;
                }
            }
            update[lvl] = x;
        }
    }

    fn scratch(&self) -> Vec<usize> {
        vec![HEAD; self.level_gen.max_level()]
    }

    /// Links `node` at every level of its tower, starting the predecessor
    /// walk at `hint[l]`, which must not lie after the node's position.
    fn link(&mut self, node: usize, hint: &[usize]) {
        let height = self.nodes[node].height();
        for lvl in 0..height {
            let mut pred = if lvl < self.level { hint[lvl] } else { HEAD };
            while let Some(n) = self.nodes[pred].next[lvl] {
                if self.nodes[n].first_key() < self.nodes[node].first_key() {
                    pred = n;
                } else {
                    break;
                }
            }
            self.nodes[node].next[lvl] = self.nodes[pred].next[lvl];
            self.nodes[pred].next[lvl] = Some(node);
        }
        self.level = self.level.max(height);
    }

    fn unlink(&mut self, node: usize, hint: &[usize]) {
        for lvl in 0..self.nodes[node].height() {
            let mut pred = hint[lvl];
            while self.nodes[pred].next[lvl] != Some(node) {
                pred = self.nodes[pred].next[lvl].expect("node is linked at every level of its tower");
            }
            self.nodes[pred].next[lvl] = self.nodes[node].next[lvl];
        }
        while self.level > 1 && self.nodes[HEAD].next[self.level - 1].is_none() {
            self.level -= 1;
        }
    }

    pub fn insert(&mut self, key: Key, value: Value) -> Option<Value> {
        let mut update = self.scratch();
        self.descend(&key, &mut update);

        if let Some(n) = self.nodes[update[0]].next[0] {
            if self.nodes[n].first_key() == key.as_slice() {
                return Some(std::mem::replace(&mut self.nodes[n].values[0], value));
            }
        }

        let target = if update[0] != HEAD {
            update[0]
        } else if let Some(first) = self.nodes[HEAD].next[0] {
            first
        } else {
            let height = self.level_gen.random_height();
            let node = self.alloc(Node {
                keys: vec![key],
                values: vec![value],
                next: vec![None; height],
            });
            self.link(node, &update);
            self.len += 1;
            return None;
        };

        let pos = match self.nodes[target].keys.binary_search(&key) {
            Ok(i) => return Some(std::mem::replace(&mut self.nodes[target].values[i], value)),
            Err(i) => i,
        };
        self.nodes[target].keys.insert(pos, key);
        self.nodes[target].values.insert(pos, value);
        self.len += 1;

        if self.nodes[target].keys.len() > self.capacity {
            let keep = self.nodes[target].keys.len().div_ceil(2);
            let keys = self.nodes[target].keys.split_off(keep);
            let values = self.nodes[target].values.split_off(keep);
            let height = self.level_gen.random_height();
            let right = self.alloc(Node {
                keys,
                values,
                next: vec![None; height],
            });
            self.link(right, &update);
        }
        None
    }

    pub fn get(&self, key: &[u8]) -> Option<&Value> {
        let (node, idx) = self.locate(key, &mut SearchStats::default())?;
        Some(&self.nodes[node].values[idx])
    }

    pub fn get_traced(&self, key: &[u8]) -> (Option<&Value>, SearchStats) {
        let mut stats = SearchStats::default();
        let found = self
            .locate(key, &mut stats)
            .map(|(node, idx)| &self.nodes[node].values[idx]);
        (found, stats)
    }

    /// Top-down search counting every key comparison and link followed.
    fn locate(&self, key: &[u8], stats: &mut SearchStats) -> Option<(usize, usize)> {
        let mut x = HEAD;
        for lvl in (0..self.level).rev() {
            while let Some(n) = self.nodes[x].next[lvl] {
                stats.compare();
                match self.nodes[n].first_key().cmp(key) {
                    Ordering::Less => {
                        stats.traverse();
                        x = n;
                    }
                    Ordering::Equal => {
                        stats.traverse();
                        return Some((n, 0));
                    }
                    Ordering::Greater => break,
                }
            }
        }
        if x == HEAD {
            return None;
        }
        // The first key is already known to be smaller.
        let rest = &self.nodes[x].keys[1..];
        rest.binary_search_by(|k| {
            stats.compare();
            k.as_slice().cmp(key)
        })
        .ok()
        .map(|i| (x, i + 1))
    }

    pub fn remove(&mut self, key: &[u8]) -> Option<Value> {
        let mut update = self.scratch();
        self.descend(key, &mut update);

        let (node, idx) = match self.nodes[update[0]].next[0] {
            Some(n) if self.nodes[n].first_key() == key => (n, 0),
            _ if update[0] == HEAD => return None,
            _ => {
                let x = update[0];
                match self.nodes[x].keys.binary_search_by(|k| k.as_slice().cmp(key)) {
                    Ok(i) => (x, i),
                    Err(_) => return None,
                }
            }
        };

        self.nodes[node].keys.remove(idx);
        let removed = self.nodes[node].values.remove(idx);
        self.len -= 1;

        if self.nodes[node].keys.is_empty() {
            self.unlink(node, &update);
            self.release(node);
            return Some(removed);
        }

        if self.nodes[node].keys.len() < self.min_fill() {
            if let Some(right) = self.nodes[node].next[0] {
                let combined = self.nodes[node].keys.len() + self.nodes[right].keys.len();
                if combined <= self.capacity {
                    let keys = std::mem::take(&mut self.nodes[right].keys);
                    let values = std::mem::take(&mut self.nodes[right].values);
                    self.unlink(right, &update);
                    self.release(right);
                    self.nodes[node].keys.extend(keys);
                    self.nodes[node].values.extend(values);
                } else {
                    let need = self.min_fill() - self.nodes[node].keys.len();
                    let keys: Vec<Key> = self.nodes[right].keys.drain(..need).collect();
                    let values: Vec<Value> = self.nodes[right].values.drain(..need).collect();
                    self.nodes[node].keys.extend(keys);
                    self.nodes[node].values.extend(values);
                }
            }
        }
        Some(removed)
    }

    /// Entries with `lo <= key <= hi`, ascending.
    pub fn range_scan(&self, lo: &[u8], hi: &[u8]) -> Result<Vec<(Key, Value)>> {
        if lo > hi {
            return Err(Error::InvalidRange);
        }
        let mut update = self.scratch();
        self.descend(lo, &mut update);
        let mut out = Vec::new();
        let mut cursor = if update[0] == HEAD {
            self.nodes[HEAD].next[0].map(|n| (n, 0))
        } else {
            let x = update[0];
            let start = self.nodes[x].keys.partition_point(|k| k.as_slice() < lo);
            Some((x, start))
        };
        while let Some((node, start)) = cursor {
            let n = &self.nodes[node];
            for (k, v) in n.keys[start..].iter().zip(&n.values[start..]) {
                if k.as_slice() > hi {
                    return Ok(out);
                }
                out.push((k.clone(), v.clone()));
            }
            cursor = n.next[0].map(|next| (next, 0));
        }
        Ok(out)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Key, &Value)> + '_ {
        let mut cursor = self.nodes[HEAD].next[0];
        std::iter::from_fn(move || {
            let node = cursor?;
            cursor = self.nodes[node].next[0];
            Some(node)
        })
        .flat_map(move |node| self.nodes[node].keys.iter().zip(&self.nodes[node].values))
    }

    /// Tower heights of the nodes in bottom-level order.
    pub fn node_heights(&self) -> Vec<usize> {
        let mut out = Vec::new();
        let mut cursor = self.nodes[HEAD].next[0];
        while let Some(n) = cursor {
            out.push(self.nodes[n].height());
            cursor = self.nodes[n].next[0];
        }
        out
    }

    /// Full structural walk. Returns a description of every violated
    /// invariant; empty means the structure is sound.
    pub fn check_invariants(&self) -> Vec<String> {
        let mut violations = Vec::new();
        let mut bottom = Vec::new();
        let mut cursor = self.nodes[HEAD].next[0];
        while let Some(n) = cursor {
            bottom.push(n);
            cursor = self.nodes[n].next[0];
        }

        let mut prev: Option<&[u8]> = None;
        let mut count = 0;
        for (pos, &n) in bottom.iter().enumerate() {
            let node = &self.nodes[n];
            if node.keys.len() != node.values.len() {
                violations.push(format!("node {n}: key/value count mismatch"));
            }
            let last = pos + 1 == bottom.len();
            if node.keys.is_empty() || node.keys.len() > self.capacity {
                violations.push(format!("node {n}: holds {} keys", node.keys.len()));
            } else if !last && node.keys.len() < self.min_fill() {
                violations.push(format!(
                    "node {n}: underfull with {} keys (minimum {})",
                    node.keys.len(),
                    self.min_fill()
                ));
            }
            for k in &node.keys {
                if let Some(p) = prev {
                    if p >= k.as_slice() {
                        violations.push(format!("bottom level not strictly ascending at {k:?}"));
                    }
                }
                prev = Some(k);
                count += 1;
            }
            if node.height() == 0 || node.height() > self.level {
                violations.push(format!("node {n}: height {} out of range", node.height()));
            }
        }
        if count != self.len {
            violations.push(format!("size {} but {} keys reachable", self.len, count));
        }

        // Level l must list exactly the bottom-level nodes taller than l, in order.
        for lvl in 1..self.level {
            let expected: Vec<usize> = bottom
                .iter()
                .copied()
                .filter(|&n| self.nodes[n].height() > lvl)
                .collect();
            let mut actual = Vec::new();
            let mut cursor = self.nodes[HEAD].next[lvl];
            while let Some(n) = cursor {
                if actual.len() > bottom.len() {
                    violations.push(format!("level {lvl}: cycle detected"));
                    break;
                }
                actual.push(n);
                cursor = self.nodes[n].next[lvl];
            }
            if expected != actual {
                violations.push(format!("level {lvl}: not the subset of taller nodes in order"));
            }
        }
        violations
    }
}

impl OrderedMap for ClassicSkiplist {
    fn insert(&mut self, key: Key, value: Value) -> Option<Value> {
        ClassicSkiplist::insert(self, key, value)
    }

    fn get(&mut self, key: &[u8]) -> Option<Value> {
        ClassicSkiplist::get(self, key).cloned()
    }

    fn get_traced(&mut self, key: &[u8]) -> (Option<Value>, SearchStats) {
        let (value, stats) = ClassicSkiplist::get_traced(self, key);
        (value.cloned(), stats)
    }

    fn remove(&mut self, key: &[u8]) -> Option<Value> {
        ClassicSkiplist::remove(self, key)
    }

    fn range_scan(&mut self, lo: &[u8], hi: &[u8]) -> Result<Vec<(Key, Value)>> {
        ClassicSkiplist::range_scan(self, lo, hi)
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
    fn insert_get_overwrite() {
        let mut list = ClassicSkiplist::default();
        assert_eq!(list.get(b"a"), None);
        assert_eq!(list.insert(b"a".to_vec(), b"1".to_vec()), None);
        assert_eq!(list.get(b"a"), Some(&b"1".to_vec()));
        assert_eq!(list.insert(b"a".to_vec(), b"2".to_vec()), Some(b"1".to_vec()));
        assert_eq!(list.len(), 1);
        list.insert(b"x".to_vec(), b"9".to_vec());
        assert_eq!(list.get(b"x"), Some(&b"9".to_vec()));
    }

    #[test]
    fn remove_examples() {
        let mut list = ClassicSkiplist::default();
        assert_eq!(list.remove(b"nope"), None);
        list.insert(b"a".to_vec(), b"1".to_vec());
        assert_eq!(list.remove(b"a"), Some(b"1".to_vec()));
        assert_eq!(list.get(b"a"), None);
        assert!(list.is_empty());
        assert!(list.check_invariants().is_empty());
    }

    #[test]
    fn range_scan_examples() {
        for cap in [1, 4] {
            let mut list = ClassicSkiplist::with_node_capacity(LevelGenConfig::default(), cap);
            for n in [1, 3, 5] {
                list.insert(k(n), k(n));
            }
            let got: Vec<Key> = list.range_scan(&k(2), &k(5)).unwrap().into_iter().map(|e| e.0).collect();
            assert_eq!(got, vec![k(3), k(5)]);
            assert!(list.range_scan(&k(6), &k(9)).unwrap().is_empty());
            assert!(matches!(list.range_scan(&k(5), &k(2)), Err(Error::InvalidRange)));
        }
    }

    #[test]
    fn traced_lower_bounds() {
        let mut list = ClassicSkiplist::default();
        let (v, stats) = list.get_traced(b"a");
        assert_eq!((v, stats.comparisons), (None, 0));
        list.insert(b"a".to_vec(), Vec::new());
        let (v, stats) = list.get_traced(b"a");
        assert!(v.is_some());
        assert!(stats.comparisons >= 1 && stats.link_traversals >= 1);
    }

    fn differential(capacity: usize, ops: usize, key_space: u64, seed: u64) {
        let mut list = ClassicSkiplist::with_node_capacity(LevelGenConfig::with_seed(seed), capacity);
        let mut oracle = BTreeMap::new();
        let mut rng = XorShift64Star::new(seed ^ 0xabcdef);
        for i in 0..ops {
            let key = k(rng.next_u64() % key_space);
            match rng.next_u64() % 4 {
                0 | 1 => {
                    let v = (i as u64).to_le_bytes().to_vec();
                    assert_eq!(list.insert(key.clone(), v.clone()), oracle.insert(key, v));
                }
                2 => assert_eq!(list.remove(&key), oracle.remove(&key)),
                _ => assert_eq!(list.get(&key), oracle.get(&key)),
            }
            if i % 997 == 0 {
                assert_eq!(list.check_invariants(), Vec::<String>::new());
            }
        }
        assert_eq!(list.len(), oracle.len());
        assert!(list.iter().map(|(k, v)| (k.clone(), v.clone())).eq(oracle.into_iter()));
        assert!(list.check_invariants().is_empty());
    }

    #[test]
    fn differential_plain() {
        differential(1, 20_000, 500, 1);
    }

    #[test]
    fn differential_unrolled() {
        for cap in [2, 3, 16] {
            differential(cap, 20_000, 500, cap as u64);
        }
    }

    #[test]
    fn unrolled_fill_bounds_on_sequential_load() {
        let mut list = ClassicSkiplist::with_node_capacity(LevelGenConfig::default(), 8);
        for n in 0..1000 {
            list.insert(k(n), Vec::new());
        }
        assert!(list.check_invariants().is_empty());
        for n in (0..1000).step_by(3) {
            list.remove(&k(n));
            assert!(list.check_invariants().is_empty(), "after removing {n}");
        }
        for n in (0..1000).rev() {
            list.remove(&k(n));
        }
        assert!(list.is_empty());
        assert!(list.check_invariants().is_empty());
    }

    #[test]
    fn zero_promotion_gives_flat_list() {
        let mut list = ClassicSkiplist::new(LevelGenConfig {
            p: 0.0,
            max_level: 8,
            seed: 3,
        });
        for n in 0..100 {
            list.insert(k(n), Vec::new());
        }
        assert!(list.node_heights().iter().all(|&h| h == 1));
    }
}
