use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{BenchError, Result};

pub const CSV_HEADER: &str = "variant,workload,ops,actors,seed,elapsed_ns,throughput_ops_per_s,mean_search_comparisons,p50_latency_ns,p99_latency_ns,final_size";

/// Field order matches [`CSV_HEADER`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub variant: String,
    pub workload: String,
    pub ops: u64,
    pub actors: u64,
    pub seed: u64,
    pub elapsed_ns: u64,
    pub throughput_ops_per_s: f64,
    pub mean_search_comparisons: f64,
    pub p50_latency_ns: u64,
    pub p99_latency_ns: u64,
    pub final_size: u64,
}

pub fn throughput(ops: u64, elapsed_ns: u64) -> f64 {
    ops as f64 / (elapsed_ns.max(1) as f64 * 1e-9)
}

/// Latencies bucketed by power of two: bucket `i > 0` holds `[2^(i-1), 2^i)`
/// nanoseconds and bucket 0 holds zero.
#[derive(Debug, Clone)]
pub struct LatencyHistogram {
    buckets: [u64; 65],
    count: u64,
}

impl Default for LatencyHistogram {
    fn default() -> Self {
        LatencyHistogram {
            buckets: [0; 65],
            count: 0,
        }
    }
}

impl LatencyHistogram {
    pub fn record(&mut self, ns: u64) {
        self.buckets[(64 - ns.leading_zeros()) as usize] += 1;
        self.count += 1;
    }

    pub fn merge(&mut self, other: &LatencyHistogram) {
        for (a, b) in self.buckets.iter_mut().zip(&other.buckets) {
            *a += b;
        }
        self.count += other.count;
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    /// Upper edge of the bucket holding the `q`-quantile, so the true
    /// quantile is at most this and more than half of it. Zero when empty.
    pub fn quantile(&self, q: f64) -> u64 {
        if self.count == 0 {
            return 0;
        }
        let rank = ((q * self.count as f64).ceil() as u64).clamp(1, self.count);
        let mut seen = 0;
        for (i, &n) in self.buckets.iter().enumerate() {
            seen += n;
            if seen >= rank {
                return match i {
                    0 => 0,
                    64 => u64::MAX,
                    _ => (1u64 << i) - 1,
                };
            }
        }
        unreachable!("rank never exceeds count")
    }
}

/// Header line, then one line per row.
pub fn emit_csv<W: Write>(rows: &[MetricsRow], sink: W) -> Result<()> {
    let mut out = csv::WriterBuilder::new().has_headers(false).from_writer(sink);
    out.write_record(CSV_HEADER.split(',')).map_err(sink_error)?;
    for row in rows {
        out.serialize(row).map_err(sink_error)?;
    }
    out.flush()?;
    Ok(())
}

fn sink_error(e: csv::Error) -> BenchError {
    match e.into_kind() {
        csv::ErrorKind::Io(e) => BenchError::SinkFailure(e),
        other => BenchError::SinkFailure(std::io::Error::other(format!("{other:?}"))),
    }
}

/// Parses [`emit_csv`] output, insisting on the exact header.
pub fn read_csv<R: Read>(source: R) -> Result<Vec<MetricsRow>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(source);
    let header = rdr.byte_headers().map_err(BenchError::MalformedRow)?;
    let joined = header.iter().map(String::from_utf8_lossy).collect::<Vec<_>>().join(",");
    if joined != CSV_HEADER {
        return Err(BenchError::BadHeader(joined));
    }
    rdr.deserialize().map(|r| r.map_err(BenchError::MalformedRow)).collect()
}
