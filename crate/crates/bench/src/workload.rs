//! Seeded operation streams.

use skipforge::level::XorShift64Star;
use skipforge::{encode_u64, Key, Value};

use crate::error::{BenchError, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Distribution {
    Uniform,
    Zipfian { theta: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorkloadSpec {
    pub op_count: u64,
    pub read_frac: f64,
    pub insert_frac: f64,
    pub remove_frac: f64,
    pub scan_frac: f64,
    pub key_space: u64,
    pub distribution: Distribution,
    /// Number of consecutive key slots a scan covers.
    pub scan_width: u64,
    pub seed: u64,
}

impl Default for WorkloadSpec {
    fn default() -> Self {
        WorkloadSpec {
            op_count: 100_000,
            read_frac: 0.5,
            insert_frac: 0.3,
            remove_frac: 0.1,
            scan_frac: 0.1,
            key_space: 10_000,
            distribution: Distribution::Uniform,
            scan_width: 16,
            seed: 42,
        }
    }
}

impl WorkloadSpec {
    pub fn validate(&self) -> Result<()> {
        let fracs = self.fractions();
        if fracs.iter().any(|f| !f.is_finite() || *f < 0.0) {
            return Err(BenchError::InvalidSpec(format!("fractions must be nonnegative, got {fracs:?}")));
        }
        let sum: f64 = fracs.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(BenchError::InvalidSpec(format!("fractions sum to {sum}, not 1")));
        }
        if let Distribution::Zipfian { theta } = self.distribution {
            if !theta.is_finite() || theta < 0.0 {
                return Err(BenchError::InvalidSpec(format!("zipf theta must be >= 0, got {theta}")));
            }
        }
        if self.key_space == 0 {
            return Err(BenchError::InvalidSpec("key space is empty".into()));
        }
        if self.scan_width == 0 {
            return Err(BenchError::InvalidSpec("scan width must be positive".into()));
        }
        Ok(())
    }

    fn fractions(&self) -> [f64; 4] {
        [self.read_frac, self.insert_frac, self.remove_frac, self.scan_frac]
    }

    /// Short label such as `r0.5_i0.3_d0.1_s0.1_zipf0.99`.
    pub fn name(&self) -> String {
        let dist = match self.distribution {
            Distribution::Uniform => "uniform".to_string(),
            Distribution::Zipfian { theta } => format!("zipf{theta}"),
        };
        format!(
            "r{}_i{}_d{}_s{}_{dist}",
            self.read_frac, self.insert_frac, self.remove_frac, self.scan_frac
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Op {
    Read(Key),
    Insert(Key, Value),
    Remove(Key),
    /// Inclusive bounds.
    Scan(Key, Key),
}

/// Draws ranks in `0..n` with probability proportional to `(rank + 1)^-theta`.
///
/// Rejection-inversion (Hörmann and Derflinger): invert the integral of the
/// continuous hat `x^-theta` and accept or reject against the bar at the
/// rounded point. Setup is O(1) and a draw needs about one uniform on average.
#[derive(Debug, Clone)]
pub struct ZipfSampler {
    n: f64,
    theta: f64,
    h_integral_x1: f64,
    h_integral_n: f64,
    s: f64,
}

impl ZipfSampler {
    pub fn new(n: u64, theta: f64) -> Self {
        assert!(n > 0 && theta > 0.0);
        let mut z = ZipfSampler {
            n: n as f64,
            theta,
            h_integral_x1: 0.0,
            h_integral_n: 0.0,
            s: 0.0,
        };
        z.h_integral_x1 = z.h_integral(1.5) - 1.0;
        z.h_integral_n = z.h_integral(z.n + 0.5);
        z.s = 2.0 - z.h_integral_inv(z.h_integral(2.5) - z.h(2.0));
        z
    }

    pub fn sample(&self, rng: &mut XorShift64Star) -> u64 {
        loop {
            let u = self.h_integral_n + rng.next_f64() * (self.h_integral_x1 - self.h_integral_n);
            let x = self.h_integral_inv(u);
            let k = (x + 0.5).floor().clamp(1.0, self.n);
            if k - x <= self.s || u >= self.h_integral(k + 0.5) - self.h(k) {
                return k as u64 - 1;
            }
        }
    }

    fn h(&self, x: f64) -> f64 {
        (-self.theta * x.ln()).exp()
    }

    fn h_integral(&self, x: f64) -> f64 {
        let log_x = x.ln();
        expm1_over_x((1.0 - self.theta) * log_x) * log_x
    }

    fn h_integral_inv(&self, x: f64) -> f64 {
        let t = (x * (1.0 - self.theta)).max(-1.0);
        (ln1p_over_x(t) * x).exp()
    }
}

// Both helpers stay accurate near zero, which is where theta = 1 lands.
fn expm1_over_x(x: f64) -> f64 {
    if x.abs() > 1e-8 {
        x.exp_m1() / x
    } else {
        1.0 + x * 0.5 * (1.0 + x / 3.0 * (1.0 + 0.25 * x))
    }
}

fn ln1p_over_x(x: f64) -> f64 {
    if x.abs() > 1e-8 {
        x.ln_1p() / x
    } else {
        1.0 - x * (0.5 - x * (1.0 / 3.0 - 0.25 * x))
    }
}

enum KeyDraw {
    Uniform(u64),
    Zipf(ZipfSampler),
}

impl KeyDraw {
    fn next(&self, rng: &mut XorShift64Star) -> u64 {
        match self {
            KeyDraw::Uniform(n) => ((rng.next_f64() * *n as f64) as u64).min(n - 1),
            KeyDraw::Zipf(z) => z.sample(rng),
        }
    }
}

/// Key slot ranks drawn from the workload's distribution, without operation tags.
pub fn key_ranks(spec: &WorkloadSpec, count: usize) -> Result<Vec<u64>> {
    spec.validate()?;
    let draw = key_draw(spec);
    let mut rng = XorShift64Star::new(spec.seed);
    Ok((0..count).map(|_| draw.next(&mut rng)).collect())
}

fn key_draw(spec: &WorkloadSpec) -> KeyDraw {
    match spec.distribution {
        Distribution::Zipfian { theta } if theta > 0.0 => KeyDraw::Zipf(ZipfSampler::new(spec.key_space, theta)),
        _ => KeyDraw::Uniform(spec.key_space),
    }
}

/// The operation stream for `spec`. Inserted values are the big-endian
/// operation index, so every insert writes a distinct value.
pub fn generate(spec: &WorkloadSpec) -> Result<Vec<Op>> {
    spec.validate()?;
    let draw = key_draw(spec);
    let mut rng = XorShift64Star::new(spec.seed);
    let fracs = spec.fractions();
    // Rounding can leave u just above the last cumulative bound; it then
    // belongs to the last kind with any weight.
    let fallback = fracs.iter().rposition(|&f| f > 0.0).unwrap_or(0);

    let mut ops = Vec::with_capacity(spec.op_count as usize);
    for i in 0..spec.op_count {
        let u = rng.next_f64();
        let mut acc = 0.0;
        let kind = fracs
            .iter()
            .position(|&f| {
                acc += f;
                f > 0.0 && u < acc
            })
            .unwrap_or(fallback);
        let k = draw.next(&mut rng);
        ops.push(match kind {
            0 => Op::Read(encode_u64(k)),
            1 => Op::Insert(encode_u64(k), encode_u64(i)),
            2 => Op::Remove(encode_u64(k)),
            _ => Op::Scan(encode_u64(k), encode_u64(k.saturating_add(spec.scan_width - 1))),
        });
    }
    Ok(ops)
}
