//! Seeded randomness. Every stream is ChaCha8 keyed by a 64-bit seed, which
//! gives the same sequence on every platform.

use rand::{Rng as _, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub const ALGORITHM: &str = "chacha8";

#[derive(Debug, Clone)]
pub struct Rng {
    seed: u64,
    inner: ChaCha8Rng,
}

impl Rng {
    pub fn seeded(seed: u64) -> Self {
        Self {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Seed from OS entropy. Callers must log `seed()` so the run can be replayed.
    pub fn from_entropy() -> Self {
        Self::seeded(rand::random())
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform in [0, 1).
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    pub fn below(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    pub fn standard_normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.inner)
    }

    /// Exponential with the given mean.
    pub fn exponential(&mut self, mean: f64) -> f64 {
        -mean * (1.0 - self.uniform()).ln()
    }

    /// Independent child stream, e.g. one per subsystem.
    pub fn fork(&mut self) -> Rng {
        Rng::seeded(self.next_u64())
    }
}

/// `mean + exp(log_scale) * n` with `n ~ N(0, 1)` drawn from `rng`.
pub fn gaussian_sample(mean: f64, log_scale: f64, rng: &mut Rng) -> f64 {
    mean + log_scale.exp() * rng.standard_normal()
}
