//! Workload generation and benchmarking for the skipforge variants.
//!
//! Every single-actor run doubles as a differential test: answers are
//! checked against a `BTreeMap` replay and no [`MetricsRow`] comes back
//! unless they all agree.

pub mod error;
pub mod metrics;
pub mod runner;
pub mod workload;

pub use error::{BenchError, Result};
pub use metrics::{emit_csv, read_csv, LatencyHistogram, MetricsRow, CSV_HEADER};
pub use runner::{run, RunConfig, Variant};
pub use workload::{generate, Distribution, Op, WorkloadSpec, ZipfSampler};
