use std::collections::BTreeMap;

use proptest::prelude::*;
use skipforge::adaptive::{AdaptiveConfig, AdaptiveSkiplist};
use skipforge::level::XorShift64Star;
use skipforge::{encode_u64, Key, OrderedMap};

#[derive(Debug, Clone)]
enum Op {
    Insert(u16, u8),
    Get(u16),
    Remove(u16),
    Scan(u16, u16),
    Decay,
}

fn op() -> impl Strategy<Value = Op> {
    prop_oneof![
        4 => (0u16..300, any::<u8>()).prop_map(|(k, v)| Op::Insert(k, v)),
        4 => (0u16..300).prop_map(Op::Get),
        2 => (0u16..300).prop_map(Op::Remove),
        1 => (0u16..300, 0u16..30).prop_map(|(lo, w)| Op::Scan(lo, lo.saturating_add(w))),
        1 => Just(Op::Decay),
    ]
}

fn key(k: u16) -> Key {
    k.to_be_bytes().to_vec()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn answers_match_btreemap(t in 1usize..12, d in 1u64..200, ops in prop::collection::vec(op(), 1..600)) {
        let config = AdaptiveConfig { promote_threshold: t, decay_period: d, max_level: 6 };
        let mut list = AdaptiveSkiplist::with_config(config).unwrap();
        let mut oracle = BTreeMap::new();
        for op in ops {
            match op {
                Op::Insert(k, v) => prop_assert_eq!(list.insert(key(k), vec![v]), oracle.insert(key(k), vec![v])),
                Op::Get(k) => prop_assert_eq!(list.get(&key(k)), oracle.get(&key(k)).cloned()),
                Op::Remove(k) => prop_assert_eq!(list.remove(&key(k)), oracle.remove(&key(k))),
                Op::Scan(lo, hi) => {
                    let want: Vec<(Key, Vec<u8>)> = oracle.range(key(lo)..=key(hi)).map(|(k, v)| (k.clone(), v.clone())).collect();
                    prop_assert_eq!(list.range_scan(&key(lo), &key(hi)).unwrap(), want);
                }
                Op::Decay => {
                    list.decay();
                }
            }
            prop_assert!(list.heights().iter().all(|&(_, h)| (1..=6).contains(&h)));
        }
        prop_assert!(list.check_invariants().is_ok());
        let contents: Vec<(Key, Vec<u8>)> = list.iter().map(|(k, v)| (k.clone(), v.clone())).collect();
        prop_assert_eq!(contents, oracle.into_iter().collect::<Vec<_>>());
    }
}

fn build(n: u64, config: AdaptiveConfig, seed: u64) -> AdaptiveSkiplist {
    let mut keys: Vec<u64> = (0..n).collect();
    let mut rng = XorShift64Star::new(seed);
    for i in (1..keys.len()).rev() {
        let j = (rng.next_u64() % (i as u64 + 1)) as usize;
        keys.swap(i, j);
    }
    let mut list = AdaptiveSkiplist::with_config(config).unwrap();
    for k in keys {
        list.insert(encode_u64(k), Vec::new());
    }
    list
}

#[test]
fn repeated_search_cost_never_rises() {
    for (seed, hot) in [(1u64, 2048u64), (2, 7), (3, 4000), (4, 1234)] {
        let config = AdaptiveConfig {
            promote_threshold: 8,
            decay_period: 1 << 20,
            max_level: 32,
        };
        let mut list = build(1 << 12, config, seed);
        let costs: Vec<u64> = (0..100).map(|_| list.get_traced(&encode_u64(hot)).1.link_traversals).collect();
        assert!(costs.windows(2).all(|w| w[1] <= w[0]), "hot key {hot}: {costs:?}");
    }
}

#[test]
fn hot_key_outgrows_cold_key_with_t1() {
    let config = AdaptiveConfig {
        promote_threshold: 1,
        decay_period: 1 << 20,
        max_level: 32,
    };
    let mut list = build(1 << 12, config, 9);
    let hot = encode_u64(3000);
    for _ in 0..100 {
        list.get(&hot);
    }
    let hot_height = list.height_of(&hot).unwrap();
    let cold_heights: Vec<usize> = (0..20).map(|i| list.height_of(&encode_u64(i * 97 + 5)).unwrap()).collect();
    assert!(cold_heights.iter().any(|&h| hot_height > h), "hot {hot_height}, cold {cold_heights:?}");
}

#[test]
fn decay_preserves_answers_and_lowers_idle_nodes() {
    let config = AdaptiveConfig {
        promote_threshold: 2,
        decay_period: 1 << 20,
        max_level: 32,
    };
    let mut list = build(2000, config, 4);
    for i in 0..500 {
        list.get(&encode_u64(i * 3));
    }
    let before: Vec<(Key, Vec<u8>)> = list.range_scan(&encode_u64(0), &encode_u64(5000)).unwrap();
    let mut heights = list.heights();
    for _ in 0..40 {
        list.decay();
        let now = list.heights();
        for (old, new) in heights.iter().zip(&now) {
            assert_eq!(old.0, new.0);
            assert!(new.1 <= old.1);
        }
        heights = now;
        list.check_invariants().unwrap();
    }
    assert!(heights.iter().all(|&(_, h)| h == 1));
    assert_eq!(list.range_scan(&encode_u64(0), &encode_u64(5000)).unwrap(), before);
    for i in 0..2000 {
        assert!(OrderedMap::get(&mut list, &encode_u64(i)).is_some());
    }
}
