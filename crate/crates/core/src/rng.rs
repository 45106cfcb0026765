//! Seeded random streams with hierarchical sub-stream derivation.
//!
//! A stream is identified by a 64-bit key. Deriving a child mixes the
//! parent key with a tag through SplitMix64, so the stream for
//! `(seed, iteration, task, sample)` is a pure function of that tuple and
//! does not depend on how many draws were taken from the parent. Each key
//! seeds a ChaCha8 generator.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Stream identity, recorded in reports to show which data a run used.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct StreamKey(pub u64);

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn mix(key: u64, tag: u64) -> u64 {
    splitmix64(splitmix64(key) ^ tag.wrapping_mul(0xD6E8_FEB8_6659_FD93).rotate_left(17))
}

#[derive(Debug, Clone)]
pub struct RngStream {
    key: StreamKey,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        Self::from_key(StreamKey(splitmix64(seed)))
    }

    pub fn from_key(key: StreamKey) -> Self {
        RngStream { key, rng: ChaCha8Rng::seed_from_u64(key.0) }
    }

    pub fn key(&self) -> StreamKey {
        self.key
    }

    /// Child stream for `tag`; independent of the parent's position.
    pub fn derive(&self, tag: u64) -> RngStream {
        Self::from_key(StreamKey(mix(self.key.0, tag)))
    }

    /// Child stream for a path of tags, e.g. `(iteration, task, sample)`.
    pub fn derive_path(&self, tags: &[u64]) -> RngStream {
        let key = tags.iter().fold(self.key.0, |k, &t| mix(k, t));
        Self::from_key(StreamKey(key))
    }

    /// Fresh 64-bit seed drawn from this stream.
    pub fn next_seed(&mut self) -> u64 {
        self.rng.next_u64()
    }

    /// Uniform on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    /// Uniform on `[a, b]` (returns `a` when `a == b`).
    pub fn uniform_in(&mut self, a: f64, b: f64) -> f64 {
        a + (b - a) * self.uniform()
    }

    /// Uniform integer in `0..n`; `n` must be positive.
    pub fn below(&mut self, n: usize) -> usize {
        self.rng.random_range(0..n)
    }

    pub fn standard_normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }

    /// In-place Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }
}
