use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Barrier};
use std::thread;

use skipforge::concurrent::{ConcurrentSkiplist, InsertOutcome, RemoveOutcome};
use skipforge::level::XorShift64Star;
use skipforge::{decode_u64, encode_u64};

const ACTORS: u64 = 8;

#[test]
fn disjoint_inserts_yield_union() {
    let list: Arc<ConcurrentSkiplist<u64>> = Arc::new(ConcurrentSkiplist::new());
    let per_actor = 2000u64;
    let handles: Vec<_> = (0..ACTORS)
        .map(|a| {
            let list = Arc::clone(&list);
            thread::spawn(move || {
                for i in 0..per_actor {
                    let k = a * per_actor + i;
                    assert_eq!(list.insert(encode_u64(k), k), InsertOutcome::Inserted);
                }
            })
        })
        .collect();
    for h in handles {
        h.join().unwrap();
    }
    let keys: Vec<u64> = list.iter().map(|(k, _)| decode_u64(&k).unwrap()).collect();
    assert_eq!(keys, (0..ACTORS * per_actor).collect::<Vec<_>>());
    list.check_quiescent().unwrap();
}

/// Successful operations on one key alternate Inserted, Removed, Inserted,
/// ... in linearization order, starting from absent. So at quiescence a key
/// is present exactly when it saw one more successful insert than remove.
#[test]
fn mixed_stress_matches_success_log() {
    let list: Arc<ConcurrentSkiplist<u64>> = Arc::new(ConcurrentSkiplist::new());
    let key_space = 512u64;
    let ops_per_actor = 20_000;
    let barrier = Arc::new(Barrier::new(ACTORS as usize));
    let handles: Vec<_> = (0..ACTORS)
        .map(|a| {
            let list = Arc::clone(&list);
            let barrier = Arc::clone(&barrier);
            thread::spawn(move || {
                let mut rng = XorShift64Star::new(a + 100);
                let mut tally: HashMap<u64, (i64, i64)> = HashMap::new();
                barrier.wait();
                for _ in 0..ops_per_actor {
                    let k = rng.next_u64() % key_space;
                    match rng.next_u64() % 3 {
                        0 => {
                            if list.insert(encode_u64(k), k) == InsertOutcome::Inserted {
                                tally.entry(k).or_default().0 += 1;
                            }
                        }
                        1 => {
                            if let RemoveOutcome::Removed(v) = list.remove(&encode_u64(k)) {
                                assert_eq!(v, k);
                                tally.entry(k).or_default().1 += 1;
                            }
                        }
                        _ => {
                            if let Some(v) = list.get(&encode_u64(k)) {
                                assert_eq!(v, k);
                            }
                        }
                    }
                }
                tally
            })
        })
        .collect();
    let mut totals: HashMap<u64, (i64, i64)> = HashMap::new();
    for h in handles {
        for (k, (i, r)) in h.join().unwrap() {
            let e = totals.entry(k).or_default();
            e.0 += i;
            e.1 += r;
        }
    }
    list.check_quiescent().unwrap();
    let present: BTreeSet<u64> = list.iter().map(|(k, _)| decode_u64(&k).unwrap()).collect();
    for k in 0..key_space {
        let (ins, rem) = totals.get(&k).copied().unwrap_or_default();
        let balance = ins - rem;
        assert!(balance == 0 || balance == 1, "key {k}: {ins} inserts vs {rem} removes");
        assert_eq!(present.contains(&k), balance == 1, "key {k}");
        assert_eq!(list.get(&encode_u64(k)).is_some(), balance == 1, "key {k}");
    }
}

#[test]
fn per_key_single_writer_replays_sequentially() {
    let list: Arc<ConcurrentSkiplist<u64>> = Arc::new(ConcurrentSkiplist::new());
    let handles: Vec<_> = (0..ACTORS)
        .map(|a| {
            let list = Arc::clone(&list);
            thread::spawn(move || {
                let mut rng = XorShift64Star::new(a);
                let mut log = Vec::new();
                for _ in 0..5000 {
                    // Actor a owns keys congruent to a modulo ACTORS.
                    let k = (rng.next_u64() % 200) * ACTORS + a;
                    let insert = rng.next_u64() % 2 == 0;
                    let ok = if insert {
                        list.insert(encode_u64(k), k) == InsertOutcome::Inserted
                    } else {
                        matches!(list.remove(&encode_u64(k)), RemoveOutcome::Removed(_))
                    };
                    log.push((k, insert, ok));
                }
                log
            })
        })
        .collect();
    let mut expected = BTreeSet::new();
    for h in handles {
        let mut oracle = BTreeSet::new();
        for (k, insert, ok) in h.join().unwrap() {
            let want = if insert { oracle.insert(k) } else { oracle.remove(&k) };
            assert_eq!(ok, want, "key {k}");
        }
        expected.extend(oracle);
    }
    let got: BTreeSet<u64> = list.iter().map(|(_, v)| v).collect();
    assert_eq!(got, expected);
}

#[test]
fn duplicate_insert_race_has_one_winner() {
    for trial in 0..500u64 {
        let list: Arc<ConcurrentSkiplist<u64>> = Arc::new(ConcurrentSkiplist::new());
        let barrier = Arc::new(Barrier::new(2));
        let handles: Vec<_> = (0..2)
            .map(|a| {
                let list = Arc::clone(&list);
                let barrier = Arc::clone(&barrier);
                thread::spawn(move || {
                    barrier.wait();
                    list.insert(encode_u64(trial), a)
                })
            })
            .collect();
        let outcomes: Vec<InsertOutcome> = handles.into_iter().map(|h| h.join().unwrap()).collect();
        let wins = outcomes.iter().filter(|o| **o == InsertOutcome::Inserted).count();
        assert_eq!(wins, 1, "trial {trial}");
        assert_eq!(list.len(), 1);
    }
}

#[test]
fn scans_stay_sorted_and_keep_pinned_keys() {
    let list: Arc<ConcurrentSkiplist<u64>> = Arc::new(ConcurrentSkiplist::new());
    // Even keys are pinned: inserted up front and never touched again.
    let pinned: Vec<u64> = (0..500).map(|i| i * 2).collect();
    for &k in &pinned {
        list.insert(encode_u64(k), k);
    }
    let stop = Arc::new(AtomicBool::new(false));
    let writers: Vec<_> = (0..4u64)
        .map(|a| {
            let list = Arc::clone(&list);
            let stop = Arc::clone(&stop);
            thread::spawn(move || {
                let mut rng = XorShift64Star::new(a);
                while !stop.load(Ordering::Relaxed) {
                    let k = (rng.next_u64() % 500) * 2 + 1;
                    if rng.next_u64() % 2 == 0 {
                        list.insert(encode_u64(k), k);
                    } else {
                        list.remove(&encode_u64(k));
                    }
                }
            })
        })
        .collect();
    for _ in 0..300 {
        let mut last: Option<u64> = None;
        let mut seen_pinned = 0;
        for (k, v) in list.iter() {
            let k = decode_u64(&k).unwrap();
            assert_eq!(k, v);
            assert!(last.is_none_or(|l| l < k), "scan went from {last:?} to {k}");
            last = Some(k);
            if k % 2 == 0 {
                seen_pinned += 1;
            }
        }
        assert_eq!(seen_pinned, pinned.len());
    }
    stop.store(true, Ordering::Relaxed);
    for w in writers {
        w.join().unwrap();
    }
    list.check_quiescent().unwrap();
}

#[test]
fn quiescent_get_agrees_with_bottom_walk() {
    let list: Arc<ConcurrentSkiplist<u64>> = Arc::new(ConcurrentSkiplist::new());
    let handles: Vec<_> = (0..4u64)
        .map(|a| {
            let list = Arc::clone(&list);
            thread::spawn(move || {
                let mut rng = XorShift64Star::new(a + 7);
                for _ in 0..10_000 {
                    let k = rng.next_u64() % 300;
                    if rng.next_u64() % 2 == 0 {
                        list.insert(encode_u64(k), k);
                    } else {
                        list.remove(&encode_u64(k));
                    }
                }
            })
        })
        .collect();
    for h in handles {
        h.join().unwrap();
    }
    let walk: BTreeMap<u64, u64> = list.iter().map(|(k, v)| (decode_u64(&k).unwrap(), v)).collect();
    for k in 0..300 {
        assert_eq!(list.get(&encode_u64(k)), walk.get(&k).copied());
    }
}
