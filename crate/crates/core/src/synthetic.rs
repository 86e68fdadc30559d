//! Synthetic samplers and datasets used by the probes, selectors and tests.

use ndarray::Array2;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{Label, LabeledDataset};
use crate::error::{Error, Result};
use crate::rng::{self, Rng};

/// Draws i.i.d. points in `R^d`.
pub trait PointSampler: Sync {
    fn dim(&self) -> usize;
    fn sample(&self, n: usize, rng: &mut Rng) -> Array2<f64>;
}

/// Isotropic Gaussian `N(mean, sigma^2 I)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianSampler {
    pub mean: Vec<f64>,
    pub sigma: f64,
}

impl GaussianSampler {
    pub fn new(mean: Vec<f64>, sigma: f64) -> Result<Self> {
        if mean.is_empty() || !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(Error::invalid("gaussian sampler needs d >= 1 and sigma >= 0"));
        }
        Ok(Self { mean, sigma })
    }

    pub fn standard(d: usize) -> Self {
        Self {
            mean: vec![0.0; d],
            sigma: 1.0,
        }
    }
}

impl PointSampler for GaussianSampler {
    fn dim(&self) -> usize {
        self.mean.len()
    }

    fn sample(&self, n: usize, rng: &mut Rng) -> Array2<f64> {
        let d = self.mean.len();
        let mut out = Array2::zeros((n, d));
        for mut r in out.outer_iter_mut() {
            for (v, m) in r.iter_mut().zip(&self.mean) {
                let z: f64 = StandardNormal.sample(rng);
                *v = m + self.sigma * z;
            }
        }
        out
    }
}

/// Uniform on the box `[lo, hi]^d`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UniformBox {
    pub dim: usize,
    pub lo: f64,
    pub hi: f64,
}

impl PointSampler for UniformBox {
    fn dim(&self) -> usize {
        self.dim
    }

    fn sample(&self, n: usize, rng: &mut Rng) -> Array2<f64> {
        Array2::from_shape_simple_fn((n, self.dim), || rng.random_range(self.lo..=self.hi))
    }
}

/// Balanced two-class task: `+1 ~ N(+s 1, I)`, `-1 ~ N(-s 1, I)`, rows interleaved.
pub fn two_gaussians(n: usize, d: usize, separation: f64, seed: u64) -> Result<LabeledDataset> {
    if n < 2 || d == 0 {
        return Err(Error::invalid("two_gaussians needs n >= 2 and d >= 1"));
    }
    let mut rng = rng::stream(seed, rng::streams::SYNTHETIC);
    let mut x = Array2::zeros((n, d));
    let mut labels = Vec::with_capacity(n);
    for (i, mut r) in x.outer_iter_mut().enumerate() {
        let label: Label = if i % 2 == 0 { 1 } else { -1 };
        for v in r.iter_mut() {
            let z: f64 = StandardNormal.sample(&mut rng);
            *v = f64::from(label) * separation + z;
        }
        labels.push(label);
    }
    LabeledDataset::new(x, labels)
}

/// `x ~ N(0, I_d)` with `y = sign(x_1)`; features `2..d` are pure noise.
pub fn planted_feature(n: usize, d: usize, seed: u64) -> Result<LabeledDataset> {
    if n < 2 || d == 0 {
        return Err(Error::invalid("planted_feature needs n >= 2 and d >= 1"));
    }
    let mut rng = rng::stream(seed, rng::streams::SYNTHETIC);
    let x = Array2::from_shape_simple_fn((n, d), || StandardNormal.sample(&mut rng));
    let labels = x.column(0).iter().map(|&v| if v >= 0.0 { 1 } else { -1 }).collect();
    LabeledDataset::new(x, labels)
}

/// A dataset whose two classes hold identical points (row `2i` and `2i+1` coincide).
pub fn identical_classes(n_per_class: usize, d: usize, seed: u64) -> Result<LabeledDataset> {
    let mut rng = rng::stream(seed, rng::streams::SYNTHETIC);
    let base = GaussianSampler::standard(d).sample(n_per_class, &mut rng);
    let x = Array2::from_shape_fn((2 * n_per_class, d), |(i, j)| base[[i / 2, j]]);
    let labels = (0..2 * n_per_class).map(|i| if i % 2 == 0 { 1 } else { -1 }).collect();
    LabeledDataset::new(x, labels)
}
