//! Reproducible random streams.
//!
//! A [`SeededRng`] is a ChaCha8 generator keyed by a 64-bit seed and a 64-bit
//! stream id. Monte-Carlo trials derive their stream id from their index, so
//! results do not depend on how trials are scheduled across threads.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

#[derive(Clone, Debug)]
pub struct SeededRng {
    seed: u64,
    stream: u64,
    inner: ChaCha8Rng,
}

impl SeededRng {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Self { seed, stream, inner }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// Stream id for a two-level index such as (grid cell, trial).
    pub fn stream_id(major: u64, minor: u64) -> u64 {
        (major << 32) | (minor & 0xffff_ffff)
    }

    pub fn standard_normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.inner)
    }

    /// Circular standard complex normal: `E|z|² = 1`.
    pub fn complex_normal(&mut self) -> Complex64 {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        Complex64::new(s * self.standard_normal(), s * self.standard_normal())
    }

    pub fn complex_normal_vector(&mut self, p: usize) -> DVector<Complex64> {
        DVector::from_fn(p, |_, _| self.complex_normal())
    }

    pub fn complex_normal_matrix(&mut self, rows: usize, cols: usize) -> DMatrix<Complex64> {
        // column-major fill order is part of the reproducibility contract
        DMatrix::from_fn(rows, cols, |_, _| self.complex_normal())
    }

    /// Gamma(shape, scale = 1).
    pub fn gamma(&mut self, shape: f64) -> f64 {
        Gamma::new(shape, 1.0)
            .expect("gamma shape must be positive and finite")
            .sample(&mut self.inner)
    }

    pub fn uniform(&mut self) -> f64 {
        // 53 random bits in [0, 1)
        (self.inner.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}

impl RngCore for SeededRng {
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
