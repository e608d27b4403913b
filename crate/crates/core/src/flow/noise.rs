use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::Vec6;
use crate::scalar::Real;

/// Uniform time grid `t_k = k h`, `k = 0..=steps`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grid {
    pub h: f64,
    pub steps: usize,
}

impl Grid {
    pub fn new(t: f64, h: f64) -> Result<Self> {
        if !(h > 0.0) || !(t > 0.0) || !t.is_finite() {
            return Err(Error::InvalidParameter(format!("need t > 0 and h > 0 (t={t}, h={h})")));
        }
        let steps = (t / h).round() as usize;
        if steps == 0 || ((steps as f64) * h - t).abs() > 1e-9 * t.max(1.0) {
            return Err(Error::InvalidParameter(format!(
                "horizon {t} is not a whole number of steps of size {h}"
            )));
        }
        Ok(Self { h, steps })
    }

    pub fn horizon(&self) -> f64 {
        self.h * self.steps as f64
    }

    pub fn time(&self, k: usize) -> f64 {
        self.h * k as f64
    }

    pub fn index_of(&self, t: f64) -> Result<usize> {
        let k = (t / self.h).round();
        if k < 0.0 || k as usize > self.steps || (k * self.h - t).abs() > 1e-9 * t.max(1.0) {
            return Err(Error::InvalidParameter(format!("time {t} is not on the grid")));
        }
        Ok(k as usize)
    }
}

/// Brownian increments reproducible from `(seed, path_index)` alone.
///
/// Each path owns the ChaCha stream `path_index` of the generator seeded with
/// `seed`, so paths can be simulated in any order or on any thread.
/// With `refine = r` each increment over `h` is the sum of `r` increments
/// over `h / r`, exactly those a driver on the finer grid would emit.
#[derive(Clone, Debug)]
pub struct NoiseDriver {
    dim: usize,
    h: f64,
    refine: usize,
    rng: ChaCha8Rng,
}

impl NoiseDriver {
    pub fn new(seed: u64, path_index: u64, dim: usize, h: f64) -> Self {
        Self::refined(seed, path_index, dim, h, 1)
    }

    pub fn refined(seed: u64, path_index: u64, dim: usize, h: f64, refine: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(path_index);
        Self { dim, h, refine: refine.max(1), rng }
    }

    pub fn next_increment<S: Real>(&mut self) -> Vec6<S> {
        let scale = (self.h / self.refine as f64).sqrt();
        let mut acc = [0.0f64; 6];
        for _ in 0..self.refine {
            for a in acc.iter_mut().take(self.dim) {
                let z: f64 = self.rng.sample(StandardNormal);
                *a += z * scale;
            }
        }
        Vec6::from_fn(|i, _| S::lit(acc[i]))
    }

    pub fn increments<S: Real>(&mut self, steps: usize) -> Vec<Vec6<S>> {
        (0..steps).map(|_| self.next_increment()).collect()
    }
}
