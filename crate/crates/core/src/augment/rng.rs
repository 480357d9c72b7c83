//! Seeded random streams with a fixed splitting rule.
//!
//! Every (master seed, step, image) triple maps to its own ChaCha8 stream, so the
//! outcome for one image never depends on how many other images are in the batch
//! or on the order in which workers process them.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Stream index used for batch-level decisions (e.g. jigsaw cell swaps).
pub const BATCH_STREAM: u64 = u64::MAX;

/// SplitMix64 finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed from a parent seed and a sequence of indices.
pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    path.iter().fold(mix64(master), |acc, &i| mix64(acc ^ mix64(i)))
}

pub struct RngStream {
    seed: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn derive(master: u64, step: u64, image: u64) -> Self {
        Self::new(derive_seed(master, &[step, image]))
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Number of 32-bit words consumed so far.
    pub fn position(&self) -> u128 {
        self.rng.get_word_pos()
    }

    /// Uniform draw from `[0, 1)`.
    pub fn unit(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    /// Uniform draw from `[lo, hi]`; returns `lo` when the range is empty.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        if hi <= lo {
            return lo;
        }
        lo + (hi - lo) * self.unit()
    }

    /// True with probability `p`. `p = 0` never fires and `p = 1` always does.
    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.unit() < p
    }

    /// Uniform index in `0..n`. Panics when `n == 0`.
    pub fn index(&mut self, n: usize) -> usize {
        assert!(n > 0, "index() over an empty range");
        self.rng.random_range(0..n as u64) as usize
    }

    /// Uniform index in `0..n` different from `exclude` (requires `n >= 2`).
    pub fn index_except(&mut self, n: usize, exclude: usize) -> usize {
        let j = self.index(n - 1);
        if j >= exclude {
            j + 1
        } else {
            j
        }
    }

    /// `k` distinct elements of `items`, in draw order.
    pub fn choose_distinct<T: Copy>(&mut self, items: &[T], k: usize) -> Vec<T> {
        let mut pool = items.to_vec();
        let k = k.min(pool.len());
        for i in 0..k {
            let j = i + self.index(pool.len() - i);
            pool.swap(i, j);
        }
        pool.truncate(k);
        pool
    }
}

/// Seeds for one pipeline step; hands out one stream per image plus a batch stream.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StepSeeds {
    pub master: u64,
    pub step: u64,
}

impl StepSeeds {
    pub fn new(master: u64, step: u64) -> Self {
        Self { master, step }
    }

    pub fn image(&self, index: usize) -> RngStream {
        RngStream::derive(self.master, self.step, index as u64)
    }

    pub fn batch(&self) -> RngStream {
        RngStream::derive(self.master, self.step, BATCH_STREAM)
    }
}
