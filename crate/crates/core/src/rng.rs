//! Seeded random streams.
//!
//! Every stream is a ChaCha8 generator (`rand_chacha`) seeded through
//! `SeedableRng::seed_from_u64`. Per-run streams are derived from the
//! experiment's base seed with [`substream_seed`]:
//!
//! ```text
//! substream_seed(base, i) = mix64(base + (i + 1) * 0x9E37_79B9_7F4A_7C15)   (wrapping)
//! ```
//!
//! where `mix64` is the SplitMix64 finalizer. The golden-ratio increment is
//! odd, so `i -> base + (i + 1) * GOLDEN` is injective modulo 2^64, and
//! `mix64` is a bijection; distinct run indices therefore always get distinct
//! seeds.
//!
//! Draws are defined on top of `next_u64` only:
//! - uniform real: `(next_u64 >> 11) * 2^-53`, in `[0, 1)`;
//! - uniform index in `0..n`: `floor(uniform * n)`, one draw;
//! - categorical: inverse CDF over the weights, one draw.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// Lane salt separating the cohort category stream from the agent stream.
pub const COHORT_LANE: u64 = 0xC0_4047_11AE_u64;

/// SplitMix64 output finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn substream_seed(base_seed: u64, run_index: u64) -> u64 {
    mix64(base_seed.wrapping_add(run_index.wrapping_add(1).wrapping_mul(GOLDEN_GAMMA)))
}

/// Single-owner deterministic random stream.
#[derive(Debug, Clone)]
pub struct RngStream {
    inner: ChaCha8Rng,
    draws: u64,
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        RngStream {
            inner: ChaCha8Rng::seed_from_u64(seed),
            draws: 0,
        }
    }

    /// Stream for run `run_index` of an experiment seeded with `base_seed`.
    pub fn for_run(base_seed: u64, run_index: u64) -> Self {
        Self::new(substream_seed(base_seed, run_index))
    }

    /// Stream for the cohort category draws of run `run_index`.
    pub fn for_cohort(base_seed: u64, run_index: u64) -> Self {
        Self::new(substream_seed(base_seed ^ COHORT_LANE, run_index))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.draws += 1;
        self.inner.next_u64()
    }

    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `0..n`. `n` must be nonzero.
    pub fn index(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        index_from_uniform(self.uniform(), n)
    }

    /// Index drawn with probability proportional to `weights`.
    pub fn categorical(&mut self, weights: &[f64]) -> usize {
        categorical_from_uniform(self.uniform(), weights)
    }

    /// Number of 64-bit draws consumed so far.
    pub fn draws(&self) -> u64 {
        self.draws
    }
}

pub(crate) fn index_from_uniform(u: f64, n: usize) -> usize {
    ((u * n as f64) as usize).min(n - 1)
}

pub(crate) fn categorical_from_uniform(u: f64, weights: &[f64]) -> usize {
    let total: f64 = weights.iter().sum();
    let target = u * total;
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            last_positive = i;
            acc += w;
            if target < acc {
                return i;
            }
        }
    }
    // rounding left target at or above the accumulated total
    last_positive
}
