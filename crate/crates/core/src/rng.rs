//! Seeded random stream and the stochastic sampling primitives built on it.

use rand::seq::SliceRandom;
use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Deterministic pseudo-random stream. Same seed (and stream) gives the same samples.
#[derive(Clone, Debug)]
pub struct Rng {
    inner: ChaCha8Rng,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng {
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// An independent stream derived from `seed`, e.g. one per layer or per chain.
    pub fn stream(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Rng { inner }
    }

    /// Standard uniform sample in `[0, 1)`.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    #[inline]
    pub fn normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.inner)
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        items.shuffle(&mut self.inner);
    }

    pub fn uniform_matrix(&mut self, rows: usize, cols: usize) -> Matrix {
        Matrix::from_fn(rows, cols, |_, _| self.uniform())
    }

    pub fn normal_matrix(&mut self, rows: usize, cols: usize, std: f64) -> Matrix {
        Matrix::from_fn(rows, cols, |_, _| std * self.normal())
    }
}

/// Binary states: 1 where a fresh uniform draw `u < p`, else 0.
pub fn sample_bernoulli(p: &Matrix, rng: &mut Rng) -> Result<Matrix> {
    if let Some(bad) = p.as_slice().iter().find(|x| !(0.0..=1.0).contains(*x)) {
        return Err(Error::domain(
            "sample_bernoulli",
            alloc::format!("probability {bad} outside [0, 1]"),
        ));
    }
    Ok(p.map(|x| if rng.uniform() < x { 1.0 } else { 0.0 }))
}

/// Mean plus unit-variance Gaussian noise; the sampling rule of linear units.
pub fn sample_gaussian(mean: &Matrix, rng: &mut Rng) -> Matrix {
    mean.map(|x| x + rng.normal())
}
