//! Drives one variant through a workload, times it, then checks every answer
//! against a `BTreeMap` replay before a row may be reported.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, Barrier};
use std::thread;
use std::time::Instant;

use skipforge::adaptive::{AdaptiveConfig, AdaptiveSkiplist};
use skipforge::classic::ClassicSkiplist;
use skipforge::concurrent::{ConcurrentSkiplist, InsertOutcome, RemoveOutcome};
use skipforge::deterministic::DetSkiplist;
use skipforge::mvcc::{Lookup, Memtable};
use skipforge::{encode_u64, Key, LevelGenConfig, OrderedMap, SearchStats, Value};

use crate::error::{BenchError, Result};
use crate::metrics::{throughput, LatencyHistogram, MetricsRow};
use crate::workload::{generate, Op, WorkloadSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    Classic,
    ClassicUnrolled,
    Deterministic,
    Concurrent,
    Adaptive,
    Mvcc,
}

impl Variant {
    pub const ALL: [Variant; 6] = [
        Variant::Classic,
        Variant::ClassicUnrolled,
        Variant::Deterministic,
        Variant::Concurrent,
        Variant::Adaptive,
        Variant::Mvcc,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Classic => "classic",
            Variant::ClassicUnrolled => "classic-unrolled",
            Variant::Deterministic => "deterministic",
            Variant::Concurrent => "concurrent",
            Variant::Adaptive => "adaptive",
            Variant::Mvcc => "mvcc",
        }
    }

    pub fn multi_actor(self) -> bool {
        matches!(self, Variant::Concurrent | Variant::Mvcc)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| BenchError::UnknownVariant(s.to_string()))
    }
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub variant: Variant,
    pub workload: WorkloadSpec,
    pub actors: usize,
    /// Height distribution for the randomized variants. The adaptive variant
    /// only uses `max_level`; deterministic and mvcc ignore it.
    pub level: LevelGenConfig,
    /// Entries per node for `classic-unrolled`. Plain `classic` always uses 1.
    pub node_capacity: usize,
    /// Plants a phantom entry in the oracle's final contents so the check
    /// has to fail. Exercises the failure path end to end.
    pub inject_mismatch: bool,
}

impl RunConfig {
    pub fn new(variant: Variant, workload: WorkloadSpec) -> Self {
        let seed = workload.seed;
        RunConfig {
            variant,
            workload,
            actors: 1,
            level: LevelGenConfig::with_seed(seed),
            node_capacity: 16,
            inject_mismatch: false,
        }
    }
}

/// What one operation returned, in a form every variant can produce.
#[derive(Debug, Clone, PartialEq, Eq)]
enum Answer {
    Value(Option<Value>),
    Inserted(bool),
    Scan(Vec<(Key, Value)>),
    /// Writes whose return value carries nothing to check (mvcc sequence numbers).
    Done,
}

/// How a variant's write answers relate to map semantics.
#[derive(Clone, Copy)]
enum Semantics {
    /// Insert overwrites and returns the old value.
    Upsert,
    /// Insert leaves an existing entry alone and reports whether it won.
    InsertIfAbsent,
    /// Writes return nothing comparable; reads see the latest write.
    Versioned,
}

#[derive(Default)]
struct Timing {
    latencies: LatencyHistogram,
    elapsed_ns: u64,
    reads: u64,
    comparisons: u64,
}

impl Timing {
    fn traced(&mut self, stats: SearchStats) {
        self.reads += 1;
        self.comparisons += stats.comparisons;
    }

    fn mean_comparisons(&self) -> f64 {
        if self.reads == 0 {
            0.0
        } else {
            self.comparisons as f64 / self.reads as f64
        }
    }
}

/// Applies `exec` to every op, timing each one.
fn timed<F>(ops: &[Op], timing: &mut Timing, mut exec: F) -> Vec<Answer>
where
    F: FnMut(&Op, &mut Timing) -> Answer,
{
    let mut answers = Vec::with_capacity(ops.len());
    let start = Instant::now();
    for op in ops {
        let t0 = Instant::now();
        let answer = exec(op, timing);
        timing.latencies.record(t0.elapsed().as_nanos() as u64);
        answers.push(answer);
    }
    timing.elapsed_ns = start.elapsed().as_nanos() as u64;
    answers
}

fn ordered_map_op<M: OrderedMap>(map: &mut M, op: &Op, timing: &mut Timing) -> Answer {
    match op {
        Op::Read(k) => {
            let (v, stats) = map.get_traced(k);
            timing.traced(stats);
            Answer::Value(v)
        }
        Op::Insert(k, v) => Answer::Value(map.insert(k.clone(), v.clone())),
        Op::Remove(k) => Answer::Value(map.remove(k)),
        Op::Scan(lo, hi) => Answer::Scan(map.range_scan(lo, hi).expect("generated scans are ordered")),
    }
}

fn concurrent_op(list: &ConcurrentSkiplist, op: &Op, timing: &mut Timing) -> Answer {
    match op {
        Op::Read(k) => {
            let (v, stats) = list.get_traced(k);
            timing.traced(stats);
            Answer::Value(v)
        }
        Op::Insert(k, v) => Answer::Inserted(list.insert(k.clone(), v.clone()) == InsertOutcome::Inserted),
        Op::Remove(k) => Answer::Value(match list.remove(k) {
            RemoveOutcome::Removed(v) => Some(v),
            RemoveOutcome::Absent => None,
        }),
        Op::Scan(lo, hi) => Answer::Scan(list.iter_from(lo).take_while(|(k, _)| k <= hi).collect()),
    }
}

/// Returns the write's sequence number alongside the answer.
fn mvcc_op(m: &Memtable, op: &Op, timing: &mut Timing) -> (Answer, Option<u64>) {
    match op {
        Op::Read(k) => {
            let (found, stats) = m.get_traced(k, m.snapshot());
            timing.traced(stats);
            let v = match found {
                Lookup::Found(v) => Some(v),
                Lookup::Deleted | Lookup::Absent => None,
            };
            (Answer::Value(v), None)
        }
        Op::Insert(k, v) => (Answer::Done, Some(m.put(k.clone(), v.clone()).expect("memtable is never frozen"))),
        Op::Remove(k) => (Answer::Done, Some(m.del(k.clone()).expect("memtable is never frozen"))),
        Op::Scan(lo, hi) => (Answer::Scan(m.scan(lo, hi, m.snapshot()).expect("generated scans are ordered")), None),
    }
}

fn oracle_replay(ops: &[Op], semantics: Semantics) -> (Vec<Answer>, BTreeMap<Key, Value>) {
    let mut map = BTreeMap::new();
    let answers = ops
        .iter()
        .map(|op| match (op, semantics) {
            (Op::Read(k), _) => Answer::Value(map.get(k).cloned()),
            (Op::Insert(k, v), Semantics::Upsert) => Answer::Value(map.insert(k.clone(), v.clone())),
            (Op::Insert(k, v), Semantics::InsertIfAbsent) => {
                let fresh = !map.contains_key(k);
                if fresh {
                    map.insert(k.clone(), v.clone());
                }
                Answer::Inserted(fresh)
            }
            (Op::Insert(k, v), Semantics::Versioned) => {
                map.insert(k.clone(), v.clone());
                Answer::Done
            }
            (Op::Remove(k), Semantics::Versioned) => {
                map.remove(k);
                Answer::Done
            }
            (Op::Remove(k), _) => Answer::Value(map.remove(k)),
            (Op::Scan(lo, hi), _) => {
                Answer::Scan(map.range(lo.clone()..=hi.clone()).map(|(k, v)| (k.clone(), v.clone())).collect())
            }
        })
        .collect();
    (answers, map)
}

/// Sorts after every key a workload can produce.
fn phantom() -> Key {
    let mut k = encode_u64(u64::MAX);
    k.push(0);
    k
}

fn compare_answers(ops: &[Op], got: &[Answer], want: &[Answer]) -> Result<()> {
    if let Some(i) = (0..want.len()).find(|&i| got[i] != want[i]) {
        return Err(BenchError::OracleMismatch(format!(
            "op {i} ({:?}) answered {:?}, oracle {:?}",
            ops[i], got[i], want[i]
        )));
    }
    Ok(())
}

fn compare_contents(got: &[(Key, Value)], want: &BTreeMap<Key, Value>) -> Result<()> {
    if got.len() != want.len() || got.iter().zip(want).any(|(g, w)| (&g.0, &g.1) != w) {
        return Err(BenchError::OracleMismatch(format!(
            "final contents hold {} entries, oracle {}",
            got.len(),
            want.len()
        )));
    }
    Ok(())
}

fn check_invariants(problems: Vec<String>) -> Result<()> {
    match problems.first() {
        None => Ok(()),
        Some(first) => Err(BenchError::InvariantViolation(format!("{first} ({} total)", problems.len()))),
    }
}

struct Outcome {
    timing: Timing,
    final_contents: Vec<(Key, Value)>,
}

/// Runs the workload and returns its metrics. Nothing is returned unless
/// the oracle agreed with every answer and with the final contents.
pub fn run(config: &RunConfig) -> Result<MetricsRow> {
    let spec = &config.workload;
    if config.actors == 0 {
        return Err(BenchError::InvalidSpec("actor count must be positive".into()));
    }
    if config.actors > 1 && !config.variant.multi_actor() {
        return Err(BenchError::UnsupportedCombination {
            variant: config.variant.name(),
            actors: config.actors,
        });
    }
    config.level.validate()?;
    if config.node_capacity == 0 {
        return Err(BenchError::InvalidSpec("node capacity must be positive".into()));
    }
    let ops = generate(spec)?;

    let outcome = if config.actors > 1 {
        match config.variant {
            Variant::Concurrent => run_concurrent_actors(config, &ops)?,
            _ => run_mvcc_actors(config, &ops)?,
        }
    } else {
        run_single(config, &ops)?
    };

    Ok(MetricsRow {
        variant: config.variant.name().to_string(),
        workload: spec.name(),
        ops: spec.op_count,
        actors: config.actors as u64,
        seed: spec.seed,
        elapsed_ns: outcome.timing.elapsed_ns,
        throughput_ops_per_s: throughput(spec.op_count, outcome.timing.elapsed_ns),
        mean_search_comparisons: outcome.timing.mean_comparisons(),
        p50_latency_ns: outcome.timing.latencies.quantile(0.5),
        p99_latency_ns: outcome.timing.latencies.quantile(0.99),
        final_size: outcome.final_contents.len() as u64,
    })
}

fn run_single(config: &RunConfig, ops: &[Op]) -> Result<Outcome> {
    let mut timing = Timing::default();
    let (answers, semantics, contents) = match config.variant {
        Variant::Classic | Variant::ClassicUnrolled => {
            let cap = if config.variant == Variant::Classic { 1 } else { config.node_capacity };
            let mut list = ClassicSkiplist::with_node_capacity(config.level, cap);
            let answers = timed(ops, &mut timing, |op, t| ordered_map_op(&mut list, op, t));
            check_invariants(list.check_invariants())?;
            let contents = list.iter().map(|(k, v)| (k.clone(), v.clone())).collect();
            (answers, Semantics::Upsert, contents)
        }
        Variant::Deterministic => {
            let mut list = DetSkiplist::new();
            let answers = timed(ops, &mut timing, |op, t| ordered_map_op(&mut list, op, t));
            let report = list.check_invariants();
            check_invariants(report.violations.iter().map(|v| v.to_string()).collect())?;
            let contents = list.iter().map(|(k, v)| (k.clone(), v.clone())).collect();
            (answers, Semantics::Upsert, contents)
        }
        Variant::Adaptive => {
            let mut list = AdaptiveSkiplist::with_config(AdaptiveConfig {
                max_level: config.level.max_level,
                ..AdaptiveConfig::default()
            })?;
            let answers = timed(ops, &mut timing, |op, t| ordered_map_op(&mut list, op, t));
            check_invariants(list.check_invariants().err().into_iter().collect())?;
            let contents = list.iter().map(|(k, v)| (k.clone(), v.clone())).collect();
            (answers, Semantics::Upsert, contents)
        }
        Variant::Concurrent => {
            let list = ConcurrentSkiplist::with_config(config.level)?;
            let answers = timed(ops, &mut timing, |op, t| concurrent_op(&list, op, t));
            check_invariants(list.check_quiescent().err().into_iter().collect())?;
            (answers, Semantics::InsertIfAbsent, list.iter().collect())
        }
        Variant::Mvcc => {
            let m = Memtable::new();
            let answers = timed(ops, &mut timing, |op, t| mvcc_op(&m, op, t).0);
            check_invariants(m.check_chains().err().into_iter().collect())?;
            let all = m.scan(&[], &phantom(), m.snapshot())?;
            (answers, Semantics::Versioned, all)
        }
    };

    let (want, mut final_map) = oracle_replay(ops, semantics);
    if config.inject_mismatch {
        final_map.insert(phantom(), Vec::new());
    }
    compare_answers(ops, &answers, &want)?;
    compare_contents(&contents, &final_map)?;
    Ok(Outcome {
        timing,
        final_contents: contents,
    })
}

/// Actor `a` executes ops `a, a + actors, a + 2 * actors, ...`.
fn spawn_actors<S, T, F>(shared: Arc<S>, ops: &[Op], actors: usize, work: F) -> (Vec<T>, Timing)
where
    S: Send + Sync + 'static,
    T: Default + Send + 'static,
    F: Fn(&S, usize, &Op, &mut Timing, &mut T) + Send + Sync + 'static,
{
    let ops: Arc<Vec<Op>> = Arc::new(ops.to_vec());
    let work = Arc::new(work);
    let barrier = Arc::new(Barrier::new(actors + 1));
    let handles: Vec<_> = (0..actors)
        .map(|a| {
            let (shared, ops, work, barrier) = (shared.clone(), ops.clone(), work.clone(), barrier.clone());
            thread::spawn(move || {
                let mut timing = Timing::default();
                let mut log = T::default();
                barrier.wait();
                for (i, op) in ops.iter().enumerate().skip(a).step_by(actors) {
                    let t0 = Instant::now();
                    work(&shared, i, op, &mut timing, &mut log);
                    timing.latencies.record(t0.elapsed().as_nanos() as u64);
                }
                (timing, log)
            })
        })
        .collect();
    barrier.wait();
    let start = Instant::now();
    let mut total = Timing::default();
    let mut logs = Vec::new();
    for h in handles {
        let (t, log) = h.join().expect("actor panicked");
        total.latencies.merge(&t.latencies);
        total.reads += t.reads;
        total.comparisons += t.comparisons;
        logs.push(log);
    }
    total.elapsed_ns = start.elapsed().as_nanos() as u64;
    (logs, total)
}

/// Multi-actor runs cannot be replayed op by op. Successful inserts and
/// removes of one key alternate in linearization order starting from
/// absent, so at quiescence a key is present exactly when its successful
/// inserts outnumber its successful removes by one.
fn run_concurrent_actors(config: &RunConfig, ops: &[Op]) -> Result<Outcome> {
    let list = Arc::new(ConcurrentSkiplist::with_config(config.level)?);
    let (logs, timing) = spawn_actors(
        list.clone(),
        ops,
        config.actors,
        |list: &ConcurrentSkiplist, _, op, t, tally: &mut HashMap<Key, (i64, i64)>| match concurrent_op(list, op, t) {
            Answer::Inserted(true) => tally.entry(key_of(op).clone()).or_default().0 += 1,
            Answer::Value(Some(_)) if matches!(op, Op::Remove(_)) => {
                tally.entry(key_of(op).clone()).or_default().1 += 1
            }
            _ => {}
        },
    );
    check_invariants(list.check_quiescent().err().into_iter().collect())?;

    let mut balance: BTreeMap<Key, i64> = BTreeMap::new();
    for (k, (ins, rem)) in logs.into_iter().flatten() {
        *balance.entry(k).or_default() += ins - rem;
    }
    if let Some((k, b)) = balance.iter().find(|(_, &b)| b != 0 && b != 1) {
        return Err(BenchError::OracleMismatch(format!("key {k:?} has success balance {b}")));
    }
    let mut expected: Vec<Key> = balance.into_iter().filter(|&(_, b)| b == 1).map(|(k, _)| k).collect();
    if config.inject_mismatch {
        expected.push(phantom());
    }
    let contents: Vec<(Key, Value)> = list.iter().collect();
    if contents.len() != expected.len() || contents.iter().zip(&expected).any(|(c, k)| &c.0 != k) {
        return Err(BenchError::OracleMismatch(format!(
            "{} keys present, success log implies {}",
            contents.len(),
            expected.len()
        )));
    }
    Ok(Outcome {
        timing,
        final_contents: contents,
    })
}

/// Sequence numbers order every write, so the newest write per key decides
/// the final contents regardless of which actor issued it.
fn run_mvcc_actors(config: &RunConfig, ops: &[Op]) -> Result<Outcome> {
    let m = Arc::new(Memtable::new());
    type Log = Vec<(u64, usize)>;
    let (logs, timing) = spawn_actors(m.clone(), ops, config.actors, |m: &Memtable, i, op, t, log: &mut Log| {
        if let (_, Some(seq)) = mvcc_op(m, op, t) {
            log.push((seq, i));
        }
    });
    check_invariants(m.check_chains().err().into_iter().collect())?;

    let mut writes: Log = logs.into_iter().flatten().collect();
    writes.sort_unstable();
    if m.version_count() != writes.len() as u64 || writes.iter().enumerate().any(|(n, w)| w.0 != n as u64 + 1) {
        return Err(BenchError::OracleMismatch(format!(
            "{} writes acknowledged but {} versions stored",
            writes.len(),
            m.version_count()
        )));
    }
    let mut expected = BTreeMap::new();
    for (_, i) in writes {
        match &ops[i] {
            Op::Insert(k, v) => expected.insert(k.clone(), v.clone()),
            Op::Remove(k) => expected.remove(k),
            _ => unreachable!("only writes are logged"),
        };
    }
    if config.inject_mismatch {
        expected.insert(phantom(), Vec::new());
    }
    let contents = m.scan(&[], &phantom(), m.snapshot())?;
    compare_contents(&contents, &expected)?;
    Ok(Outcome {
        timing,
        final_contents: contents,
    })
}

fn key_of(op: &Op) -> &Key {
    match op {
        Op::Read(k) | Op::Insert(k, _) | Op::Remove(k) | Op::Scan(k, _) => k,
    }
}
