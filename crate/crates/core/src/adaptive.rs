//! Search-adaptive skiplist.
//!
//! Nodes enter at height 1 and rise only when searches find them expensive:
//!
//! * whenever a search follows more than `T` links on one level since its
//!   last drop-down, the node reached by the `(T + 1)`-th link is raised by
//!   one level (once per search, at the first level where this happens);
//! * a successful `get` that followed more than `T` links in total also
//!   raises the node it found.
//!
//! Every `D` operations a decay pass halves all access counters and lowers
//! by one level every raised node whose counter has dropped to zero.
//! Promotion and decay only change tower heights, never the key order.

use std::cmp::Ordering;

use crate::key::{Key, Value};
use crate::stats::SearchStats;
use crate::{Error, OrderedMap, Result};

const HEAD: usize = 0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AdaptiveConfig {
    /// Links a search may follow before it triggers a promotion.
    pub promote_threshold: usize,
    /// Operations between decay passes.
    pub decay_period: u64,
    pub max_level: usize,
}

impl Default for AdaptiveConfig {
    fn default() -> Self {
        AdaptiveConfig {
            promote_threshold: 8,
            decay_period: 4096,
            max_level: 32,
        }
    }
}

impl AdaptiveConfig {
    pub fn validate(&self) -> Result<()> {
        if self.promote_threshold == 0 {
            return Err(Error::InvalidInput("promote_threshold must be positive".into()));
        }
        if self.decay_period == 0 {
            return Err(Error::InvalidInput("decay_period must be positive".into()));
        }
        if self.max_level == 0 {
            return Err(Error::InvalidInput("max_level must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct Node {
    key: Key,
    value: Value,
    next: Vec<Option<usize>>,
    hits: u64,
}

#[derive(Debug, Clone)]
pub struct AdaptiveSkiplist {
    nodes: Vec<Node>,
    free: Vec<usize>,
    config: AdaptiveConfig,
    len: usize,
    ops: u64,
}

/// Where a search ended.
struct Probe {
    /// Last node on each level with key below the target.
    preds: Vec<usize>,
    found: Option<usize>,
    /// First node to cross the threshold on its level.
    crossing: Option<usize>,
    stats: SearchStats,
}

impl Default for AdaptiveSkiplist {
    fn default() -> Self {
        Self::new()
    }
}

impl AdaptiveSkiplist {
    pub fn new() -> Self {
        Self::with_config(AdaptiveConfig::default()).expect("default config is valid")
    }

    pub fn with_config(config: AdaptiveConfig) -> Result<Self> {
        config.validate()?;
        Ok(AdaptiveSkiplist {
            nodes: vec![Node {
                key: Vec::new(),
                value: Vec::new(),
                next: vec![None; config.max_level],
                hits: 0,
            }],
            free: Vec::new(),
            config,
            len: 0,
            ops: 0,
        })
    }

    pub fn config(&self) -> AdaptiveConfig {
        self.config
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    fn height(&self, node: usize) -> usize {
        self.nodes[node].next.len()
    }

    /// Highest level in use plus one.
    fn levels(&self) -> usize {
        self.nodes[HEAD].next.iter().rposition(Option::is_some).map_or(0, |l| l + 1)
    }

    /// Descends towards `key`, stopping early at the first node equal to it.
    fn probe(&self, key: &[u8]) -> Probe {
        let mut preds = vec![HEAD; self.config.max_level];
        let mut crossing = None;
        let mut stats = SearchStats::default();
        let mut x = HEAD;
        for lvl in (0..self.levels()).rev() {
            let mut run = 0;
            while let Some(n) = self.nodes[x].next[lvl] {
                stats.compare();
                let ord = self.nodes[n].key.as_slice().cmp(key);
                if ord == Ordering::Greater {
                    break;
                }
                stats.traverse();
                run += 1;
                if run == self.config.promote_threshold + 1 && crossing.is_none() {
                    crossing = Some(n);
                }
                if ord == Ordering::Equal {
                    preds[lvl] = x;
                    return Probe {
                        preds,
                        found: Some(n),
                        crossing,
                        stats,
                    };
                }
                x = n;
            }
            preds[lvl] = x;
        }
        Probe {
            preds,
            found: None,
            crossing,
            stats,
        }
    }

    /// Raises `node` by one level unless it is already at the cap.
    fn promote(&mut self, node: usize) {
        let lvl = self.height(node);
        if lvl >= self.config.max_level {
            return;
        }
        let key = self.nodes[node].key.clone();
        let mut x = HEAD;
        for l in (lvl..self.config.max_level).rev() {
            while let Some(n) = self.nodes[x].next[l] {
                if self.nodes[n].key >= key {
                    break;
                }
                x = n;
            }
        }
        let after = self.nodes[x].next[lvl];
        self.nodes[node].next.push(after);
        self.nodes[x].next[lvl] = Some(node);
    }

    fn tick(&mut self) {
        self.ops += 1;
        if self.ops.is_multiple_of(self.config.decay_period) {
            self.decay();
        }
    }

    pub fn insert(&mut self, key: Key, value: Value) -> Option<Value> {
        let probe = self.probe(&key);
        let previous = if let Some(n) = probe.found {
            Some(std::mem::replace(&mut self.nodes[n].value, value))
        } else {
            let pred = probe.preds[0];
            let node = Node {
                key,
                value,
                next: vec![self.nodes[pred].next[0]],
                hits: 0,
            };
            let slot = match self.free.pop() {
                Some(slot) => {
                    self.nodes[slot] = node;
                    slot
                }
                None => {
                    self.nodes.push(node);
                    self.nodes.len() - 1
                }
            };
            self.nodes[pred].next[0] = Some(slot);
            self.len += 1;
            None
        };
        // An existing key keeps its height on update.
        if let Some(c) = probe.crossing.filter(|&c| Some(c) != probe.found) {
            self.promote(c);
        }
        self.tick();
        previous
    }

    pub fn get(&mut self, key: &[u8]) -> Option<Value> {
        self.get_traced(key).0
    }

    /// Looks `key` up, applies promotion, and reports the cost of the
    /// search as it ran (before any promotion it triggered).
    pub fn get_traced(&mut self, key: &[u8]) -> (Option<Value>, SearchStats) {
        let probe = self.probe(key);
        if let Some(c) = probe.crossing {
            self.promote(c);
        }
        let value = probe.found.map(|n| {
            self.nodes[n].hits += 1;
            let expensive = probe.stats.link_traversals > self.config.promote_threshold as u64;
            if expensive && probe.crossing != Some(n) {
                self.promote(n);
            }
            self.nodes[n].value.clone()
        });
        self.tick();
        (value, probe.stats)
    }

    pub fn remove(&mut self, key: &[u8]) -> Option<Value> {
        let probe = self.probe(key);
        let removed = probe.found.map(|n| {
            let mut preds = probe.preds.clone();
            let key = self.nodes[n].key.clone();
            // The probe stopped at n's top level; find n's predecessors below.
            for lvl in (0..self.height(n).saturating_sub(1)).rev() {
                let mut x = preds[lvl + 1];
                while let Some(m) = self.nodes[x].next[lvl] {
                    if self.nodes[m].key >= key {
                        break;
                    }
                    x = m;
                }
                preds[lvl] = x;
            }
            for lvl in 0..self.height(n) {
                self.nodes[preds[lvl]].next[lvl] = self.nodes[n].next[lvl];
            }
            self.free.push(n);
            self.len -= 1;
            let node = std::mem::replace(
                &mut self.nodes[n],
                Node {
                    key: Vec::new(),
                    value: Vec::new(),
                    next: Vec::new(),
                    hits: 0,
                },
            );
            node.value
        });
        self.tick();
        removed
    }

    pub fn range_scan(&mut self, lo: &[u8], hi: &[u8]) -> Result<Vec<(Key, Value)>> {
        if lo > hi {
            return Err(Error::InvalidRange);
        }
        let mut x = HEAD;
        for lvl in (0..self.levels()).rev() {
            while let Some(n) = self.nodes[x].next[lvl] {
                if self.nodes[n].key.as_slice() >= lo {
                    break;
                }
                x = n;
            }
        }
        let mut out = Vec::new();
        let mut cursor = self.nodes[x].next[0];
        while let Some(n) = cursor {
            if self.nodes[n].key.as_slice() > hi {
                break;
            }
            out.push((self.nodes[n].key.clone(), self.nodes[n].value.clone()));
            cursor = self.nodes[n].next[0];
        }
        self.tick();
        Ok(out)
    }

    /// Halves every access counter, then lowers by one level each raised
    /// node whose counter is zero. Returns the number of nodes lowered.
    pub fn decay(&mut self) -> usize {
        for node in self.nodes.iter_mut() {
            node.hits /= 2;
        }
        let mut demoted = 0;
        // Ascending, so a node lowered at one level is not seen again above.
        for lvl in 1..self.levels() {
            let mut pred = HEAD;
            while let Some(n) = self.nodes[pred].next[lvl] {
                if self.height(n) == lvl + 1 && self.nodes[n].hits == 0 {
                    self.nodes[pred].next[lvl] = self.nodes[n].next.pop().expect("tower");
                    demoted += 1;
                } else {
                    pred = n;
                }
            }
        }
        demoted
    }

    /// Current tower height of `key`'s node.
    pub fn height_of(&self, key: &[u8]) -> Option<usize> {
        self.iter_nodes().find(|&n| self.nodes[n].key.as_slice() == key).map(|n| self.height(n))
    }

    fn iter_nodes(&self) -> impl Iterator<Item = usize> + '_ {
        let mut cursor = self.nodes[HEAD].next[0];
        std::iter::from_fn(move || {
            let n = cursor?;
            cursor = self.nodes[n].next[0];
            Some(n)
        })
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Key, &Value)> + '_ {
        self.iter_nodes().map(|n| (&self.nodes[n].key, &self.nodes[n].value))
    }

    /// `(key, height)` for every node in ascending key order.
    pub fn heights(&self) -> Vec<(Key, usize)> {
        self.iter_nodes().map(|n| (self.nodes[n].key.clone(), self.height(n))).collect()
    }

    /// Checks ordering, the height cap, and that every level lists exactly
    /// the nodes tall enough for it.
    pub fn check_invariants(&self) -> std::result::Result<(), String> {
        let bottom: Vec<usize> = self.iter_nodes().collect();
        if bottom.len() != self.len {
            return Err(format!("size {} but {} nodes linked", self.len, bottom.len()));
        }
        for pair in bottom.windows(2) {
            if self.nodes[pair[0]].key >= self.nodes[pair[1]].key {
                return Err(format!("out of order at {:?}", self.nodes[pair[1]].key));
            }
        }
        for lvl in 1..self.config.max_level {
            let expected = bottom.iter().copied().filter(|&n| self.height(n) > lvl);
            let mut actual = Vec::new();
            let mut cursor = self.nodes[HEAD].next[lvl];
            while let Some(n) = cursor {
                actual.push(n);
                cursor = self.nodes[n].next.get(lvl).copied().flatten();
            }
            if !expected.eq(actual) {
                return Err(format!("level {lvl} inconsistent"));
            }
        }
        Ok(())
    }
}

impl OrderedMap for AdaptiveSkiplist {
    fn insert(&mut self, key: Key, value: Value) -> Option<Value> {
        AdaptiveSkiplist::insert(self, key, value)
    }

    fn get(&mut self, key: &[u8]) -> Option<Value> {
        AdaptiveSkiplist::get(self, key)
    }

    fn get_traced(&mut self, key: &[u8]) -> (Option<Value>, SearchStats) {
        AdaptiveSkiplist::get_traced(self, key)
    }

    fn remove(&mut self, key: &[u8]) -> Option<Value> {
        AdaptiveSkiplist::remove(self, key)
    }

    fn range_scan(&mut self, lo: &[u8], hi: &[u8]) -> Result<Vec<(Key, Value)>> {
        AdaptiveSkiplist::range_scan(self, lo, hi)
    }

    fn len(&self) -> usize {
        self.len
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::key::encode_u64;

    fn k(n: u64) -> Key {
        encode_u64(n)
    }

    #[test]
    fn fresh_nodes_are_flat() {
        let mut list = AdaptiveSkiplist::with_config(AdaptiveConfig {
            promote_threshold: 100,
            ..AdaptiveConfig::default()
        })
        .unwrap();
        list.insert(k(1), Vec::new());
        list.insert(k(2), Vec::new());
        for _ in 0..10 {
            assert!(list.get(&k(1)).is_some());
            assert!(list.get(&k(2)).is_some());
        }
        assert_eq!(list.height_of(&k(1)), Some(1));
        assert_eq!(list.height_of(&k(2)), Some(1));
        assert_eq!(list.height_of(&k(3)), None);
    }

    #[test]
    fn update_keeps_height() {
        let mut list = AdaptiveSkiplist::with_config(AdaptiveConfig {
            promote_threshold: 1,
            ..AdaptiveConfig::default()
        })
        .unwrap();
        for n in 0..100 {
            list.insert(k(n), Vec::new());
        }
        for n in 0..100 {
            let before = list.height_of(&k(n));
            assert_eq!(list.insert(k(n), b"x".to_vec()), Some(Vec::new()));
            assert_eq!(list.height_of(&k(n)), before);
        }
        list.check_invariants().unwrap();
    }

    #[test]
    fn decay_on_flat_list() {
        let mut list = AdaptiveSkiplist::with_config(AdaptiveConfig {
            promote_threshold: 1000,
            ..AdaptiveConfig::default()
        })
        .unwrap();
        for n in 0..50 {
            list.insert(k(n), Vec::new());
        }
        assert_eq!(list.decay(), 0);
    }

    #[test]
    fn decay_lowers_unused_nodes() {
        let mut list = AdaptiveSkiplist::with_config(AdaptiveConfig {
            promote_threshold: 1,
            ..AdaptiveConfig::default()
        })
        .unwrap();
        for n in 0..64 {
            list.insert(k(n), Vec::new());
        }
        for _ in 0..20 {
            list.get(&k(60));
        }
        let hot = list.height_of(&k(60)).unwrap();
        assert!(hot > 1);
        let mut last = hot;
        for _ in 0..40 {
            list.decay();
            let h = list.height_of(&k(60)).unwrap();
            assert!(h <= last);
            last = h;
            list.check_invariants().unwrap();
        }
        assert_eq!(last, 1);
    }
}
