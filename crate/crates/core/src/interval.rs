//! Interval skiplist answering stabbing queries.
//!
//! Interval endpoints live in an ordinary probabilistic skiplist. Each
//! interval `I` leaves markers on the structure:
//!
//! * on the link from `x` to `y` at level `L` when `[x, y]` lies inside `I`
//!   but the level `L + 1` link spanning it does not;
//! * on node `M` when `M` lies inside `I` but the link one level above `M`'s
//!   top that spans `M` does not.
//!
//! A stab for `q` walks the ordinary search path. Every link it drops down
//! from spans `q`, so collecting their markers, plus the node markers of `q`
//! itself when `q` is an endpoint, yields exactly the intervals containing
//! `q`. Links leaving the head or reaching the end of a level span an
//! unbounded range and never carry markers.
//!
//! Node heights are drawn once at creation and never change.

use std::collections::HashMap;

use crate::key::Key;
use crate::level::{LevelGenConfig, LevelGenerator};
use crate::stats::SearchStats;
use crate::{Error, Result};

const HEAD: usize = 0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct IntervalId(pub u64);

#[derive(Debug, Clone)]
struct Node {
    key: Key,
    next: Vec<Option<usize>>,
    /// `edge[L]` marks the link `next[L]`.
    edge: Vec<Vec<IntervalId>>,
    eq: Vec<IntervalId>,
    /// Interval endpoints resting on this node; an interval with
    /// `lo == hi` counts twice.
    refs: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Site {
    Edge(usize, usize),
    Eq(usize),
}

#[derive(Debug, Clone)]
struct Entry {
    lo: Key,
    hi: Key,
    sites: Vec<Site>,
}

#[derive(Debug, Clone)]
pub struct IntervalSkiplist {
    nodes: Vec<Node>,
    free: Vec<usize>,
    levels: LevelGenerator,
    intervals: HashMap<IntervalId, Entry>,
    next_id: u64,
}

impl Default for IntervalSkiplist {
    fn default() -> Self {
        Self::new()
    }
}

impl IntervalSkiplist {
    pub fn new() -> Self {
        Self::with_config(LevelGenConfig::default()).expect("default config is valid")
    }

    pub fn with_config(config: LevelGenConfig) -> Result<Self> {
        config.validate()?;
        let levels = LevelGenerator::new(config);
        let max = levels.max_level();
        Ok(IntervalSkiplist {
            nodes: vec![Node {
                key: Vec::new(),
                next: vec![None; max],
                edge: vec![Vec::new(); max],
                eq: Vec::new(),
                refs: 0,
            }],
            free: Vec::new(),
            levels,
            intervals: HashMap::new(),
            next_id: 0,
        })
    }

    /// Number of stored intervals.
    pub fn len(&self) -> usize {
        self.intervals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    /// Number of distinct endpoint keys.
    pub fn endpoint_count(&self) -> usize {
        self.nodes.len() - 1 - self.free.len()
    }

    pub fn interval(&self, id: IntervalId) -> Option<(&Key, &Key)> {
        self.intervals.get(&id).map(|e| (&e.lo, &e.hi))
    }

    pub fn add(&mut self, lo: Key, hi: Key) -> Result<IntervalId> {
        if lo > hi {
            return Err(Error::InvalidInterval);
        }
        let lo_node = self.acquire(&lo);
        self.acquire(&hi);
        let id = IntervalId(self.next_id);
        self.next_id += 1;
        let sites = self.place(id, lo_node, &hi);
        self.intervals.insert(id, Entry { lo, hi, sites });
        Ok(id)
    }

    pub fn remove(&mut self, id: IntervalId) -> Result<()> {
        let entry = self.intervals.remove(&id).ok_or(Error::UnknownId(id.0))?;
        self.clear(id, &entry.sites);
        self.release(&entry.lo);
        self.release(&entry.hi);
        Ok(())
    }

    /// Ids of all intervals containing `q`, ascending.
    pub fn stab(&self, q: &[u8]) -> Vec<IntervalId> {
        self.stab_traced(q).0
    }

    pub fn stab_traced(&self, q: &[u8]) -> (Vec<IntervalId>, SearchStats) {
        let mut stats = SearchStats::default();
        let mut out = Vec::new();
        let mut x = HEAD;
        for lvl in (0..self.max_level()).rev() {
            let mut n = self.nodes[x].next[lvl];
            while let Some(c) = n {
                stats.compare();
                if self.nodes[c].key.as_slice() >= q {
                    break;
                }
                stats.traverse();
                x = c;
                n = self.nodes[x].next[lvl];
            }
            if let Some(c) = n {
                if self.nodes[c].key.as_slice() == q {
                    stats.traverse();
                    out.extend_from_slice(&self.nodes[c].eq);
                    break;
                }
                out.extend_from_slice(&self.nodes[x].edge[lvl]);
            }
        }
        out.sort_unstable();
        out.dedup();
        (out, stats)
    }

    fn max_level(&self) -> usize {
        self.levels.max_level()
    }

    fn height(&self, node: usize) -> usize {
        self.nodes[node].next.len()
    }

    /// Last node on each level with key below `key`.
    fn preds(&self, key: &[u8]) -> Vec<usize> {
        let mut preds = vec![HEAD; self.max_level()];
        let mut x = HEAD;
        for lvl in (0..self.max_level()).rev() {
            while let Some(n) = self.nodes[x].next[lvl] {
                if self.nodes[n].key.as_slice() >= key {
                    break;
                }
                x = n;
            }
            preds[lvl] = x;
        }
        preds
    }

    fn find(&self, key: &[u8]) -> Option<usize> {
        let pred = self.preds(key)[0];
        self.nodes[pred].next[0].filter(|&n| self.nodes[n].key.as_slice() == key)
    }

    /// Finds or creates the endpoint node for `key` and takes a reference.
    fn acquire(&mut self, key: &[u8]) -> usize {
        let preds = self.preds(key);
        if let Some(n) = self.nodes[preds[0]].next[0] {
            if self.nodes[n].key.as_slice() == key {
                self.nodes[n].refs += 1;
                return n;
            }
        }

        let height = self.levels.random_height();
        // Intervals whose markers depend on the links about to be split all
        // mark one of them; lift them off and put them back afterwards.
        let mut affected: Vec<IntervalId> = (0..height)
            .flat_map(|lvl| self.nodes[preds[lvl]].edge[lvl].iter().copied())
            .collect();
        affected.sort_unstable();
        affected.dedup();
        for &id in &affected {
            let sites = std::mem::take(&mut self.intervals.get_mut(&id).expect("live id").sites);
            self.clear(id, &sites);
        }

        let next: Vec<Option<usize>> = (0..height).map(|lvl| self.nodes[preds[lvl]].next[lvl]).collect();
        let node = Node {
            key: key.to_vec(),
            next,
            edge: vec![Vec::new(); height],
            eq: Vec::new(),
            refs: 1,
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
        for (lvl, &p) in preds.iter().enumerate().take(height) {
            self.nodes[p].next[lvl] = Some(slot);
        }

        self.replace(&affected);
        slot
    }

    /// Drops a reference to the endpoint node for `key`, excising the node
    /// when no interval rests on it any more.
    fn release(&mut self, key: &[u8]) {
        let preds = self.preds(key);
        let node = self.nodes[preds[0]].next[0].expect("endpoint node exists");
        debug_assert_eq!(self.nodes[node].key.as_slice(), key);
        self.nodes[node].refs -= 1;
        if self.nodes[node].refs > 0 {
            return;
        }

        // Every interval marking a link at this node also marks the node.
        let affected = self.nodes[node].eq.clone();
        for &id in &affected {
            let sites = std::mem::take(&mut self.intervals.get_mut(&id).expect("live id").sites);
            self.clear(id, &sites);
        }
        debug_assert!(self.nodes[node].edge.iter().all(Vec::is_empty));
        for lvl in 0..self.height(node) {
            self.nodes[preds[lvl]].next[lvl] = self.nodes[node].next[lvl];
        }
        self.nodes[node] = Node {
            key: Vec::new(),
            next: Vec::new(),
            edge: Vec::new(),
            eq: Vec::new(),
            refs: 0,
        };
        self.free.push(node);
        self.replace(&affected);
    }

    fn replace(&mut self, ids: &[IntervalId]) {
        for &id in ids {
            let (lo, hi) = {
                let e = &self.intervals[&id];
                (e.lo.clone(), e.hi.clone())
            };
            let lo_node = self.find(&lo).expect("endpoint node exists");
            let sites = self.place(id, lo_node, &hi);
            self.intervals.get_mut(&id).expect("live id").sites = sites;
        }
    }

    /// Walks from `lo_node` to the node holding `hi`, always along the
    /// highest link that does not overshoot `hi`, marking every link and
    /// node on the way.
    fn place(&mut self, id: IntervalId, lo_node: usize, hi: &[u8]) -> Vec<Site> {
        let mut sites = vec![Site::Eq(lo_node)];
        self.nodes[lo_node].eq.push(id);
        let mut x = lo_node;
        while self.nodes[x].key.as_slice() != hi {
            let lvl = (0..self.height(x))
                .rev()
                .find(|&l| {
                    self.nodes[x].next[l].is_some_and(|n| self.nodes[n].key.as_slice() <= hi)
                })
                .expect("hi lies to the right of x");
            self.nodes[x].edge[lvl].push(id);
            sites.push(Site::Edge(x, lvl));
            x = self.nodes[x].next[lvl].expect("checked above");
            self.nodes[x].eq.push(id);
            sites.push(Site::Eq(x));
        }
        sites
    }

    fn clear(&mut self, id: IntervalId, sites: &[Site]) {
        for &site in sites {
            let list = match site {
                Site::Edge(node, lvl) => &mut self.nodes[node].edge[lvl],
                Site::Eq(node) => &mut self.nodes[node].eq,
            };
            let pos = list.iter().position(|&m| m == id).expect("marker recorded at site");
            list.swap_remove(pos);
        }
    }

    fn live_nodes(&self) -> Vec<usize> {
        let mut out = Vec::new();
        let mut cursor = self.nodes[HEAD].next[0];
        while let Some(n) = cursor {
            out.push(n);
            cursor = self.nodes[n].next[0];
        }
        out
    }

    /// Whether the link leaving `from` at `lvl` spans a range inside `[lo, hi]`.
    fn link_within(&self, from: usize, lvl: usize, lo: &[u8], hi: &[u8]) -> bool {
        if from == HEAD || lvl >= self.max_level() {
            return false;
        }
        match self.nodes[from].next.get(lvl).copied().flatten() {
            Some(to) => lo <= self.nodes[from].key.as_slice() && self.nodes[to].key.as_slice() <= hi,
            None => false,
        }
    }

    /// Whether the level-`lvl` link spanning `node` lies inside `[lo, hi]`.
    fn spanning_within(&self, node: usize, lvl: usize, lo: &[u8], hi: &[u8]) -> bool {
        if lvl >= self.max_level() {
            return false;
        }
        let from = if self.height(node) > lvl {
            node
        } else {
            self.preds(&self.nodes[node].key)[lvl]
        };
        self.link_within(from, lvl, lo, hi)
    }

    /// Full structural sweep of every marker:
    ///
    /// * marked links and nodes lie inside their interval;
    /// * a marked link's parent link and a marked node's covering link do
    ///   not, so every marker is maximal;
    /// * each interval's markers chain from `lo` to `hi` without gaps;
    /// * markers and per-interval bookkeeping agree, so nothing is orphaned;
    /// * endpoint reference counts match the stored intervals.
    pub fn check_markers(&self) -> std::result::Result<(), String> {
        let mut seen: HashMap<IntervalId, Vec<Site>> = HashMap::new();
        let mut refs: HashMap<usize, usize> = HashMap::new();
        for e in self.intervals.values() {
            let lo = self.find(&e.lo).ok_or("missing lo endpoint")?;
            let hi = self.find(&e.hi).ok_or("missing hi endpoint")?;
            *refs.entry(lo).or_default() += 1;
            *refs.entry(hi).or_default() += 1;
        }
        for n in self.live_nodes() {
            let node = &self.nodes[n];
            if node.refs != refs.get(&n).copied().unwrap_or(0) || node.refs == 0 {
                return Err(format!("endpoint {:?} has refcount {}", node.key, node.refs));
            }
            for (lvl, marks) in node.edge.iter().enumerate() {
                for &id in marks {
                    seen.entry(id).or_default().push(Site::Edge(n, lvl));
                }
            }
            for &id in &node.eq {
                seen.entry(id).or_default().push(Site::Eq(n));
            }
        }
        if !self.nodes[HEAD].edge.iter().all(Vec::is_empty) || !self.nodes[HEAD].eq.is_empty() {
            return Err("head carries markers".into());
        }

        for (&id, e) in &self.intervals {
            let (lo, hi) = (e.lo.as_slice(), e.hi.as_slice());
            let mut found = seen.remove(&id).unwrap_or_default();
            let mut recorded = e.sites.clone();
            let order = |s: &Site| match *s {
                Site::Edge(n, l) => (n, 1, l),
                Site::Eq(n) => (n, 0, 0),
            };
            found.sort_by_key(order);
            recorded.sort_by_key(order);
            if found != recorded {
                return Err(format!("interval {id:?}: markers disagree with its site list"));
            }

            let mut at = self.find(lo).ok_or("missing lo endpoint")?;
            let mut chained = vec![Site::Eq(at)];
            for site in &e.sites {
                match *site {
                    Site::Edge(n, lvl) => {
                        if !self.link_within(n, lvl, lo, hi) {
                            return Err(format!("interval {id:?}: marked link outside interval"));
                        }
                        if self.spanning_within(n, lvl + 1, lo, hi) {
                            return Err(format!("interval {id:?}: marked link at level {lvl} not maximal"));
                        }
                    }
                    Site::Eq(n) => {
                        let key = self.nodes[n].key.as_slice();
                        if key < lo || key > hi {
                            return Err(format!("interval {id:?}: marked node outside interval"));
                        }
                        if self.spanning_within(n, self.height(n), lo, hi) {
                            return Err(format!("interval {id:?}: marked node {key:?} not maximal"));
                        }
                    }
                }
            }
            while self.nodes[at].key.as_slice() != hi {
                let lvl = (0..self.height(at))
                    .rev()
                    .find(|&l| e.sites.contains(&Site::Edge(at, l)))
                    .ok_or_else(|| format!("interval {id:?}: cover breaks at {:?}", self.nodes[at].key))?;
                chained.push(Site::Edge(at, lvl));
                at = self.nodes[at].next[lvl].expect("marked link has a target");
                chained.push(Site::Eq(at));
            }
            chained.sort_by_key(order);
            if chained != recorded {
                return Err(format!("interval {id:?}: markers off the covering chain"));
            }
        }
        if let Some(id) = seen.keys().next() {
            return Err(format!("orphan markers for {id:?}"));
        }
        Ok(())
    }
}
