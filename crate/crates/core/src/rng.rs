//! Deterministic counter-based random number generation.
//!
//! Every source of randomness in the crate is an explicit [`Rng`] value,
//! never ambient state. A generator is a (key, counter) pair over the
//! SplitMix64 output function: draw i is `mix(key + (i+1)*GAMMA)`, so the
//! stream is pure in the seed, trivially serializable, and independent
//! streams can be forked per labeled purpose ("data", "noise",
//! "degradation", ...).

use serde::{Deserialize, Serialize};

const GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn label_hash(label: &str) -> u64 {
    // FNV-1a 64.
    let mut h: u64 = 0xCBF2_9CE4_8422_2325;
    for b in label.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    h
}

/// Counter-based generator (SplitMix64 in counter mode).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rng {
    key: u64,
    counter: u64,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng { key: seed, counter: 0 }
    }

    /// Fork an independent stream for a labeled purpose. Streams with
    /// distinct labels (or from distinct parents) do not overlap.
    pub fn stream(&self, label: &str) -> Rng {
        Rng { key: mix(self.key ^ label_hash(label)), counter: 0 }
    }

    /// Fork an indexed substream, e.g. one per clip.
    pub fn substream(&self, index: u64) -> Rng {
        Rng { key: mix(self.key.wrapping_add(GAMMA.wrapping_mul(index ^ 0xD1B5))), counter: 0 }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.counter = self.counter.wrapping_add(1);
        mix(self.key.wrapping_add(self.counter.wrapping_mul(GAMMA)))
    }

    /// Uniform in [0, 1).
    pub fn uniform(&mut self) -> f32 {
        // 24 high bits -> exactly representable f32 grid.
        (self.next_u64() >> 40) as f32 / (1u64 << 24) as f32
    }

    /// Uniform in [lo, hi).
    pub fn uniform_in(&mut self, lo: f32, hi: f32) -> f32 {
        lo + (hi - lo) * self.uniform()
    }

    /// Uniform integer in [0, n).
    pub fn below(&mut self, n: u64) -> u64 {
        debug_assert!(n > 0);
        self.next_u64() % n
    }

    /// Bernoulli draw with probability `p`.
    pub fn coin(&mut self, p: f32) -> bool {
        (self.uniform() as f64) < p as f64
    }

    /// Standard normal via Box-Muller (one value per pair of uniforms).
    pub fn normal(&mut self) -> f32 {
        // u1 in (0, 1] so the log is finite.
        let u1 = ((self.next_u64() >> 11) as f64 + 1.0) / (1u64 << 53) as f64;
        let u2 = (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64;
        ((-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()) as f32
    }

    pub fn fill_normal(&mut self, out: &mut [f32]) {
        for v in out.iter_mut() {
            *v = self.normal();
        }
    }

    /// Sample an index from unnormalized non-negative weights.
    pub fn weighted(&mut self, weights: &[f64]) -> usize {
        let total: f64 = weights.iter().sum();
        debug_assert!(total > 0.0);
        let mut u = self.uniform() as f64 * total;
        for (i, w) in weights.iter().enumerate() {
            if u < *w {
                return i;
            }
            u -= w;
        }
        weights.len() - 1
    }
}
