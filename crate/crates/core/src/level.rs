//! Seedable tower-height generation.
//!
//! Heights come from a coin-flipping loop over a portable xorshift64*
//! generator, so a given seed yields the same height sequence everywhere.
//!
//! Generator (all arithmetic wrapping, 64-bit):
//!
//! ```text
//! seeding:  z = seed + 0x9E3779B97F4A7C15
//!           z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
//!           z = (z ^ (z >> 27)) * 0x94D049BB133111EB
//!           state = z ^ (z >> 31)          (0 is replaced by 0x9E3779B97F4A7C15)
//! step:     x ^= x >> 12; x ^= x << 25; x ^= x >> 27
//!           output = x * 0x2545F4914F6CDD1D
//! uniform:  (output >> 11) * 2^-53         in [0, 1)
//! ```

use std::sync::atomic::{AtomicU64, Ordering};

pub const DEFAULT_P: f64 = 0.5;
pub const DEFAULT_MAX_LEVEL: usize = 32;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
fn splitmix64(z: u64) -> u64 {
    let mut z = z;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[inline]
fn unit_f64(bits: u64) -> f64 {
    (bits >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// xorshift64* pseudorandom generator.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct XorShift64Star {
    state: u64,
}

impl XorShift64Star {
    pub fn new(seed: u64) -> Self {
        let state = splitmix64(seed.wrapping_add(GOLDEN_GAMMA));
        XorShift64Star {
            state: if state == 0 { GOLDEN_GAMMA } else { state },
        }
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        let mut x = self.state;
        x ^= x >> 12;
        x ^= x << 25;
        x ^= x >> 27;
        self.state = x;
        x.wrapping_mul(0x2545_F491_4F6C_DD1D)
    }

    /// Uniform draw in `[0, 1)` with 53 bits of precision.
    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        unit_f64(self.next_u64())
    }
}

/// Parameters of the height distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevelGenConfig {
    /// Promotion probability, in `[0, 1)`.
    pub p: f64,
    /// Tallest tower the generator may emit, at least 1.
    pub max_level: usize,
    pub seed: u64,
}

impl Default for LevelGenConfig {
    fn default() -> Self {
        LevelGenConfig {
            p: DEFAULT_P,
            max_level: DEFAULT_MAX_LEVEL,
            seed: 0,
        }
    }
}

impl LevelGenConfig {
    pub fn with_seed(seed: u64) -> Self {
        LevelGenConfig {
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> crate::Result<()> {
        if !(0.0..1.0).contains(&self.p) {
            return Err(crate::Error::InvalidInput(format!(
                "promotion probability {} outside [0, 1)",
                self.p
            )));
        }
        if self.max_level == 0 {
            return Err(crate::Error::InvalidInput("max_level must be at least 1".into()));
        }
        Ok(())
    }
}

/// Single-owner height generator.
#[derive(Debug, Clone)]
pub struct LevelGenerator {
    rng: XorShift64Star,
    p: f64,
    max_level: usize,
}

impl LevelGenerator {
    pub fn new(config: LevelGenConfig) -> Self {
        LevelGenerator {
            rng: XorShift64Star::new(config.seed),
            p: config.p,
            max_level: config.max_level.max(1),
        }
    }

    pub fn max_level(&self) -> usize {
        self.max_level
    }

    /// Draws a height in `1..=max_level`: start at 1 and add one level per
    /// consecutive uniform draw that falls below `p`.
    pub fn random_height(&mut self) -> usize {
        let mut height = 1;
        while height < self.max_level && self.rng.next_f64() < self.p {
            height += 1;
        }
        height
    }
}

/// Height generator that many threads may draw from at once.
///
/// Each uniform draw claims one position of a splitmix64 stream with a single
/// atomic add. Heights are reproducible for a fixed seed only when drawn from
/// one thread.
#[derive(Debug)]
pub struct SharedLevelGenerator {
    counter: AtomicU64,
    p: f64,
    max_level: usize,
}

impl SharedLevelGenerator {
    pub fn new(config: LevelGenConfig) -> Self {
        SharedLevelGenerator {
            counter: AtomicU64::new(config.seed),
            p: config.p,
            max_level: config.max_level.max(1),
        }
    }

    pub fn max_level(&self) -> usize {
        self.max_level
    }

    pub fn random_height(&self) -> usize {
        let mut height = 1;
        while height < self.max_level {
            let z = self
                .counter
                .fetch_add(GOLDEN_GAMMA, Ordering::Relaxed)
                .wrapping_add(GOLDEN_GAMMA);
            if unit_f64(splitmix64(z)) >= self.p {
                break;
            }
            height += 1;
        }
        height
    }
}
