use std::collections::BTreeMap;

use skipbench::{generate, run, Op, RunConfig, Variant, WorkloadSpec};

#[test]
fn classic_final_size_matches_replay() {
    let spec = WorkloadSpec {
        op_count: 100_000,
        ..WorkloadSpec::default()
    };
    let mut oracle = BTreeMap::new();
    for op in generate(&spec).unwrap() {
        match op {
            Op::Insert(k, v) => {
                oracle.insert(k, v);
            }
            Op::Remove(k) => {
                oracle.remove(&k);
            }
            Op::Read(_) | Op::Scan(..) => {}
        }
    }
    let row = run(&RunConfig::new(Variant::Classic, spec)).unwrap();
    assert_eq!(row.final_size, oracle.len() as u64);
    assert_eq!(row.ops, 100_000);
    assert!(row.p50_latency_ns <= row.p99_latency_ns);
    let implied = row.ops as f64 / (row.elapsed_ns as f64 * 1e-9);
    assert!((row.throughput_ops_per_s - implied).abs() <= 1e-9 * implied);
}

#[test]
fn concurrent_with_eight_actors_emits_a_row() {
    let cfg = RunConfig {
        actors: 8,
        ..RunConfig::new(Variant::Concurrent, WorkloadSpec::default())
    };
    let row = run(&cfg).unwrap();
    assert_eq!(row.actors, 8);
}

#[test]
fn deterministic_run_keeps_invariants() {
    // run() sweeps the deterministic invariants after the workload and
    // reports a violation as an error.
    for seed in 0..4 {
        let spec = WorkloadSpec {
            op_count: 20_000,
            key_space: 3000,
            seed,
            ..WorkloadSpec::default()
        };
        run(&RunConfig::new(Variant::Deterministic, spec)).unwrap();
    }
}

#[test]
fn zipf_workloads_pass_every_oracle() {
    for v in Variant::ALL {
        let spec = WorkloadSpec {
            op_count: 20_000,
            distribution: skipbench::Distribution::Zipfian { theta: 1.2 },
            ..WorkloadSpec::default()
        };
        run(&RunConfig::new(v, spec)).unwrap();
    }
}
