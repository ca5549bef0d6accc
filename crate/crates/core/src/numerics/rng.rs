//! Deterministic random numbers.
//!
//! Every stochastic path in the crate draws from [`Rng`], a thin wrapper over
//! xoshiro256++ seeded through SplitMix64. The stream depends only on the seed,
//! never on the platform, so acceptance runs reproduce bit-for-bit.
//!
//! Normals use Box-Muller through `libm` directly. A sampler built on
//! `num-traits` float methods would switch to the system math library
//! whenever another crate in the build enables `num-traits/std`.

use rand::{Rng as _, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

use super::matrix::Matrix;

#[derive(Clone, Debug)]
pub struct Rng(Xoshiro256PlusPlus);

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng(Xoshiro256PlusPlus::seed_from_u64(seed))
    }

    /// Independent stream derived from `(seed, stream)`.
    pub fn stream(seed: u64, stream: u64) -> Self {
        // Mix the stream id so that nearby (seed, stream) pairs do not collide.
        let mixed = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15).rotate_left(17);
        Rng::new(mixed)
    }

    pub fn normal(&mut self) -> f64 {
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        libm::sqrt(-2.0 * libm::log(u1)) * libm::cos(core::f64::consts::TAU * u2)
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.0.gen::<f64>()
    }

    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Uniform integer in `0..n`. `n` must be positive.
    pub fn below(&mut self, n: usize) -> usize {
        self.0.gen_range(0..n)
    }

    pub fn range_inclusive(&mut self, lo: usize, hi: usize) -> usize {
        self.0.gen_range(lo..=hi)
    }

    pub fn coin(&mut self) -> bool {
        self.0.gen::<bool>()
    }

    pub fn normal_matrix(&mut self, rows: usize, cols: usize, std: f64) -> Matrix {
        Matrix::from_fn(rows, cols, |_, _| std * self.normal())
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }
}

/// `rows x cols` matrix of independent N(0, std²) draws.
pub fn seeded_normal(seed: u64, rows: usize, cols: usize, std: f64) -> Matrix {
    Rng::new(seed).normal_matrix(rows, cols, std)
}
