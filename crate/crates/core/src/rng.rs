//! Seedable, splittable random streams.
//!
//! Every random draw in the engine comes from a [`StreamRng`] addressed by a
//! `(seed, path)` pair. The path is folded into a 64-bit key with the
//! SplitMix64 finalizer:
//!
//! ```text
//! key_0 = seed
//! key_{k+1} = splitmix64(key_k ^ splitmix64(path[k] + 0x9E3779B97F4A7C15))
//! ```
//!
//! and the key seeds a ChaCha8 block cipher in counter mode
//! (`rand_chacha::ChaCha8Rng::seed_from_u64`). Floats are the top 53 bits of
//! a `u64` draw scaled by 2^-53; bounded integers use the 128-bit
//! multiply-high reduction. Streams with distinct paths are independent, so
//! rollouts can be generated in any order or in parallel and still reproduce.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 output function.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Folds a path of stream identifiers into a child seed.
pub fn derive_seed(seed: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(seed, |key, &p| splitmix64(key ^ splitmix64(p.wrapping_add(GOLDEN))))
}

/// Domain tags that keep the different consumers of a run seed apart.
pub mod tags {
    pub const TASK: u64 = 1;
    pub const CORPUS: u64 = 2;
    pub const BATCH: u64 = 3;
    pub const ROLLOUT: u64 = 4;
    pub const INIT: u64 = 5;
}

#[derive(Debug, Clone)]
pub struct StreamRng {
    inner: ChaCha8Rng,
}

impl StreamRng {
    pub fn derive(seed: u64, path: &[u64]) -> Self {
        Self {
            inner: ChaCha8Rng::seed_from_u64(derive_seed(seed, path)),
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform in [0, 1).
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `0..n`.
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0, "below(0)");
        ((self.next_u64() as u128 * n as u128) >> 64) as u64
    }

    /// Standard normal via Box-Muller.
    pub fn normal(&mut self) -> f64 {
        let u1 = 1.0 - self.next_f64();
        let u2 = self.next_f64();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }
}
