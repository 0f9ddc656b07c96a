//! Seeded, splittable random number generation.
//!
//! Algorithm: ChaCha8 (`rand_chacha`). A stream is identified by a
//! `(master seed, domain, index)` triple: the 32-byte ChaCha key holds the
//! master seed in bytes 0..8 and the domain tag in bytes 8..16, and the
//! ChaCha stream id is the item index. Items of a parallel map therefore get
//! independent streams that do not depend on scheduling or worker count.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const ALGORITHM: &str = "chacha8";

/// Domain tags separating the streams of different pipeline stages.
pub mod domain {
    pub const STATE: u64 = 0x5354_4154;
    pub const TRIALS: u64 = 0x5452_4941;
    pub const PARAMS: u64 = 0x5041_5241;
    pub const SPLIT: u64 = 0x5350_4c54;
    pub const MODEL: u64 = 0x4d4f_444c;
    pub const SWEEP: u64 = 0x5357_4550;
    pub const RELABEL: u64 = 0x524c_424c;
}

#[derive(Clone, Debug)]
pub struct Rng {
    seed: u64,
    inner: ChaCha8Rng,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Self::stream(seed, 0, 0)
    }

    /// Independent stream for item `index` of pipeline stage `domain`.
    pub fn stream(master: u64, domain: u64, index: u64) -> Self {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&master.to_le_bytes());
        key[8..16].copy_from_slice(&domain.to_le_bytes());
        let mut inner = ChaCha8Rng::from_seed(key);
        inner.set_stream(index);
        Self { seed: master, inner }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Uniform in `[lo, hi)`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        use rand::Rng as _;
        lo + (hi - lo) * self.random::<f64>()
    }

    /// Uniform in `(lo, hi]`.
    pub fn uniform_left_open(&mut self, lo: f64, hi: f64) -> f64 {
        hi - self.uniform(0.0, hi - lo)
    }

    pub fn below(&mut self, n: usize) -> usize {
        use rand::Rng as _;
        self.random_range(0..n)
    }
}

impl RngCore for Rng {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}
