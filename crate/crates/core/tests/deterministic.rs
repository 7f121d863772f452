use std::collections::BTreeMap;

use proptest::prelude::*;
use skipforge::deterministic::{DetSkiplist, Violation};
use skipforge::duality::{from_tree, to_tree, TreeNode, TwoThreeFourTree};
use skipforge::level::XorShift64Star;
use skipforge::{encode_u64, Key};

#[derive(Debug, Clone)]
enum Op {
    Insert(u16, u8),
    Remove(u16),
}

fn op() -> impl Strategy<Value = Op> {
    prop_oneof![
        3 => (0u16..400, any::<u8>()).prop_map(|(k, v)| Op::Insert(k, v)),
        2 => (0u16..400).prop_map(Op::Remove),
    ]
}

fn key(k: u16) -> Key {
    k.to_be_bytes().to_vec()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn invariant_holds_after_every_operation(ops in prop::collection::vec(op(), 1..400)) {
        let mut list = DetSkiplist::new();
        let mut oracle = BTreeMap::new();
        for op in ops {
            match op {
                Op::Insert(k, v) => prop_assert_eq!(list.insert(key(k), vec![v]), oracle.insert(key(k), vec![v])),
                Op::Remove(k) => prop_assert_eq!(list.remove(&key(k)), oracle.remove(&key(k))),
            }
            let report = list.check_invariants();
            prop_assert!(report.ok(), "{:?}", report.violations);
        }
        let contents: Vec<(Key, Vec<u8>)> = list.iter().map(|(k, v)| (k.clone(), v.clone())).collect();
        prop_assert_eq!(contents, oracle.into_iter().collect::<Vec<_>>());
    }

    #[test]
    fn duality_round_trip(ops in prop::collection::vec(op(), 0..600)) {
        let mut list = DetSkiplist::new();
        for op in ops {
            match op {
                Op::Insert(k, v) => { list.insert(key(k), vec![v]); }
                Op::Remove(k) => { list.remove(&key(k)); }
            }
        }
        let tree = to_tree(&list).unwrap();
        prop_assert!(tree.validate().is_ok());
        prop_assert_eq!(tree.len(), list.len());
        prop_assert_eq!(tree.depth(), if list.is_empty() { 0 } else { list.height() });
        let back = from_tree(&tree).unwrap();
        prop_assert!(back == list);
    }
}

/// Longest traced search over every stored key, compared against
/// 4·log2(n) + 8 for several insertion orders.
#[test]
fn worst_case_search_bound() {
    for exp in [4u32, 8, 12, 14] {
        let n = 1u64 << exp;
        let orders: Vec<Vec<u64>> = vec![
            (0..n).collect(),
            (0..n).rev().collect(),
            {
                let mut v: Vec<u64> = (0..n).collect();
                let mut rng = XorShift64Star::new(exp as u64);
                for i in (1..v.len()).rev() {
                    let j = (rng.next_u64() % (i as u64 + 1)) as usize;
                    v.swap(i, j);
                }
                v
            },
        ];
        for order in orders {
            let mut list = DetSkiplist::new();
            for &k in &order {
                list.insert(encode_u64(k), Vec::new());
            }
            let bound = 4 * exp as u64 + 8;
            let worst = (0..n)
                .map(|k| list.get_traced(&encode_u64(k)).1.comparisons)
                .max()
                .unwrap();
            assert!(worst <= bound, "n = 2^{exp}: worst {worst} > {bound}");
            let miss = list.get_traced(&encode_u64(n + 1)).1.comparisons;
            assert!(miss <= bound, "n = 2^{exp}: miss costs {miss}");
        }
    }
}

#[test]
fn height_bound_during_fuzz() {
    let mut list = DetSkiplist::new();
    let mut rng = XorShift64Star::new(2024);
    for step in 0..20_000 {
        let k = encode_u64(rng.next_u64() % 3000);
        if rng.next_u64() % 5 < 3 {
            list.insert(k, Vec::new());
        } else {
            list.remove(&k);
        }
        if !list.is_empty() {
            let bound = list.len().ilog2() as usize + 1;
            assert!(list.height() <= bound, "step {step}: height {} for {} keys", list.height(), list.len());
        }
    }
}

#[test]
fn empty_gap_is_reported() {
    // Two adjacent height-2 nodes leave an empty gap between them.
    let towers = vec![
        (encode_u64(1), Vec::new(), 1),
        (encode_u64(2), Vec::new(), 2),
        (encode_u64(3), Vec::new(), 2),
        (encode_u64(4), Vec::new(), 1),
    ];
    let list = DetSkiplist::from_towers(towers).unwrap();
    let report = list.check_invariants();
    assert!(report.violations.contains(&Violation::Gap {
        level: 0,
        after: Some(encode_u64(2)),
        count: 0,
    }));
}

#[test]
fn tree_to_list_to_tree() {
    let leaf = |keys: &[u64]| TreeNode {
        entries: keys.iter().map(|&k| (encode_u64(k), Vec::new())).collect(),
        children: Vec::new(),
    };
    let tree = TwoThreeFourTree {
        root: Some(TreeNode {
            entries: vec![(encode_u64(10), Vec::new()), (encode_u64(20), Vec::new())],
            children: vec![leaf(&[1, 2, 3]), leaf(&[11]), leaf(&[21, 22])],
        }),
    };
    let list = from_tree(&tree).unwrap();
    assert!(list.check_invariants().ok());
    assert_eq!(list.height(), 2);
    assert_eq!(to_tree(&list).unwrap(), tree);
}
