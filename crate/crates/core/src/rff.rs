//! Random Fourier features for the shift-invariant base kernels.
//!
//! Each kernel `k(x - y)` is the Fourier transform of a spectral law `mu`
//! (Bochner), so `k(x, y) = E[phi(x; xi) phi(y; xi)]` with
//! `phi(x; xi) = sqrt(2) cos(<x, xi> + b)`, `xi ~ mu`, `b ~ U[0, 2 pi)`.
//!
//! | kernel    | spectral law of `xi`                        |
//! |-----------|---------------------------------------------|
//! | Gaussian  | `N(0, I / rho^2)`                           |
//! | ANOVA     | `N(0, I / rho^2)` (same kernel under a shared `rho`) |
//! | Laplacian | multivariate Cauchy, scale `1 / rho`        |
//!
//! The `sqrt(2)` amplitude lives in [`feature_map`]; the `1/sqrt(D)`
//! normalization is applied by the classifier and by [`kernel_approx`].

use std::f64::consts::{PI, SQRT_2};

use ndarray::{Array1, Array2};
use rand::Rng as _;
use rand_distr::weighted::WeightedIndex;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::row;
use crate::error::{Error, Result};
use crate::kernels::{BaseKernel, KernelFamily};
use crate::mmd::MixtureWeights;
use crate::rng::{self, Rng};

/// Spectral family of a kernel's Bochner dual.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpectralFamily {
    Gaussian,
    Cauchy,
}

/// Draws frequencies from the spectral law of one base kernel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralSampler {
    pub kernel: BaseKernel,
}

impl SpectralSampler {
    pub fn new(kernel: BaseKernel) -> Self {
        Self { kernel }
    }

    pub fn family(&self) -> SpectralFamily {
        match self.kernel.family {
            KernelFamily::Gaussian | KernelFamily::Anova => SpectralFamily::Gaussian,
            KernelFamily::Laplacian => SpectralFamily::Cauchy,
        }
    }

    /// `sigma_p^2 = E |xi|^2`: `d / rho^2` for the Gaussian law, infinite for Cauchy.
    pub fn second_moment(&self, d: usize) -> f64 {
        match self.family() {
            SpectralFamily::Gaussian => d as f64 / (self.kernel.bandwidth * self.kernel.bandwidth),
            SpectralFamily::Cauchy => f64::INFINITY,
        }
    }

    /// Fills `out` with one frequency vector.
    pub fn sample_into(&self, out: &mut [f64], rng: &mut Rng) {
        let inv_rho = 1.0 / self.kernel.bandwidth;
        for v in out.iter_mut() {
            let z: f64 = StandardNormal.sample(rng);
            *v = z * inv_rho;
        }
        if self.family() == SpectralFamily::Cauchy {
            // Gaussian vector over an independent |N(0,1)|: a multivariate
            // Cauchy whose characteristic function is exp(-|t| / rho).
            let g: f64 = StandardNormal.sample(rng);
            let scale = 1.0 / g.abs().max(f64::MIN_POSITIVE);
            out.iter_mut().for_each(|v| *v *= scale);
        }
    }

    /// `draws` frequency rows and phases.
    pub fn sample(&self, draws: usize, d: usize, rng: &mut Rng) -> FrequencyBlock {
        let mut frequencies = Array2::zeros((draws, d));
        let mut phases = Vec::with_capacity(draws);
        for mut r in frequencies.outer_iter_mut() {
            self.sample_into(r.as_slice_mut().expect("standard layout"), rng);
            phases.push(sample_phase(rng));
        }
        FrequencyBlock { frequencies, phases }
    }
}

fn sample_phase(rng: &mut Rng) -> f64 {
    rng.random_range(0.0..2.0 * PI)
}

/// Frequencies (`D x d`) and phases (`D`) drawn for one kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyBlock {
    pub frequencies: Array2<f64>,
    pub phases: Vec<f64>,
}

impl FrequencyBlock {
    pub fn draws(&self) -> usize {
        self.phases.len()
    }
}

/// `D` frequencies for `k` in dimension `d`, deterministic in `seed`.
pub fn sample_frequencies(k: &BaseKernel, draws: usize, d: usize, seed: u64) -> Result<FrequencyBlock> {
    if draws == 0 || d == 0 {
        return Err(Error::invalid("need at least one draw and one dimension"));
    }
    let mut r = rng::stream(seed, rng::streams::FREQUENCIES);
    Ok(SpectralSampler::new(*k).sample(draws, d, &mut r))
}

/// `sqrt(2) cos(<x, xi> + b)`.
#[inline]
pub fn feature_map(x: &[f64], xi: &[f64], b: f64) -> f64 {
    SQRT_2 * (dot(x, xi) + b).cos()
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| u * v).sum()
}

/// `(1/D) sum_j phi(x; xi_j) phi(y; xi_j)`, an unbiased estimate of `k(x, y)`.
pub fn kernel_approx(x: &[f64], y: &[f64], block: &FrequencyBlock) -> f64 {
    let d = block.draws();
    let sum: f64 = (0..d)
        .map(|j| {
            let xi = row(&block.frequencies, j);
            feature_map(x, xi, block.phases[j]) * feature_map(y, xi, block.phases[j])
        })
        .sum();
    sum / d as f64
}

/// Everything needed to regenerate a [`FeatureBank`]: frequencies are never
/// stored, only re-drawn from the seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BankSpec {
    pub kernels: Vec<BaseKernel>,
    pub weights: MixtureWeights,
    pub draws: usize,
    pub dim: usize,
    pub seed: u64,
}

/// Per-kernel frequency blocks plus mixture weights: the map
/// `phi^w(x) = (sqrt(w_1) phi^1(x), ..., sqrt(w_m) phi^m(x))` in `R^{mD}`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureBank {
    spec: BankSpec,
    blocks: Vec<FrequencyBlock>,
}

impl FeatureBank {
    /// Draws `D` frequencies per kernel. Block `l` uses its own stream of
    /// `seed`, so adding kernels never changes earlier blocks.
    pub fn generate(spec: BankSpec) -> Result<Self> {
        if spec.kernels.is_empty() || spec.kernels.len() != spec.weights.len() {
            return Err(Error::DimensionMismatch {
                expected: spec.kernels.len(),
                found: spec.weights.len(),
            });
        }
        if spec.draws == 0 || spec.dim == 0 {
            return Err(Error::invalid("feature bank needs draws >= 1 and dim >= 1"));
        }
        let blocks = spec
            .kernels
            .par_iter()
            .enumerate()
            .map(|(l, k)| {
                let mut r = rng::stream(spec.seed, rng::streams::FREQUENCIES + l as u64);
                SpectralSampler::new(*k).sample(spec.draws, spec.dim, &mut r)
            })
            .collect();
        Ok(Self { spec, blocks })
    }

    pub fn new(
        kernels: Vec<BaseKernel>,
        weights: MixtureWeights,
        draws: usize,
        dim: usize,
        seed: u64,
    ) -> Result<Self> {
        Self::generate(BankSpec {
            kernels,
            weights,
            draws,
            dim,
            seed,
        })
    }

    pub fn spec(&self) -> &BankSpec {
        &self.spec
    }

    pub fn blocks(&self) -> &[FrequencyBlock] {
        &self.blocks
    }

    pub fn kernels(&self) -> &[BaseKernel] {
        &self.spec.kernels
    }

    pub fn weights(&self) -> &MixtureWeights {
        &self.spec.weights
    }

    /// `D`, draws per kernel.
    pub fn draws(&self) -> usize {
        self.spec.draws
    }

    /// `m`, number of kernels.
    pub fn n_kernels(&self) -> usize {
        self.spec.kernels.len()
    }

    pub fn dim(&self) -> usize {
        self.spec.dim
    }

    /// `mD`.
    pub fn feature_dim(&self) -> usize {
        self.n_kernels() * self.draws()
    }

    /// Writes `phi^w(x)` into `out` (length `mD`).
    pub fn features_into(&self, x: &[f64], out: &mut [f64]) {
        let d = self.draws();
        for (l, (block, &w)) in self.blocks.iter().zip(self.spec.weights.as_slice()).enumerate() {
            let amp = w.sqrt();
            let seg = &mut out[l * d..(l + 1) * d];
            if amp == 0.0 {
                seg.fill(0.0);
                continue;
            }
            for (j, v) in seg.iter_mut().enumerate() {
                *v = amp * feature_map(x, row(&block.frequencies, j), block.phases[j]);
            }
        }
    }

    pub fn features(&self, x: &[f64]) -> Result<Array1<f64>> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: x.len(),
            });
        }
        let mut out = Array1::zeros(self.feature_dim());
        self.features_into(x, out.as_slice_mut().expect("contiguous"));
        Ok(out)
    }

    /// Bit pattern digest of the first `min(8, D)` regenerated frequencies of
    /// each block, used to verify a reloaded model.
    pub fn checksum(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut hasher = Sha256::new();
        for block in &self.blocks {
            for j in 0..block.draws().min(8) {
                for v in row(&block.frequencies, j) {
                    hasher.update(v.to_bits().to_le_bytes());
                }
                hasher.update(block.phases[j].to_bits().to_le_bytes());
            }
        }
        hasher.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// `Phi`, `n x mD`, with the bank's block layout recorded for scaling.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub values: Array2<f64>,
    /// `D`.
    pub draws: usize,
    /// `m`.
    pub n_kernels: usize,
}

impl FeatureMatrix {
    /// Wraps raw features; `values.ncols()` must equal `n_kernels * draws`.
    pub fn from_raw(values: Array2<f64>, draws: usize, n_kernels: usize) -> Result<Self> {
        if values.ncols() != draws * n_kernels || draws == 0 {
            return Err(Error::DimensionMismatch {
                expected: draws * n_kernels,
                found: values.ncols(),
            });
        }
        Ok(Self {
            values: values.as_standard_layout().into_owned(),
            draws,
            n_kernels,
        })
    }

    pub fn nrows(&self) -> usize {
        self.values.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.values.ncols()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        row(&self.values, i)
    }
}

/// Row `i` holds `phi^w(x_i)`.
pub fn build_feature_matrix(x: &Array2<f64>, bank: &FeatureBank) -> Result<FeatureMatrix> {
    if x.ncols() != bank.dim() {
        return Err(Error::DimensionMismatch {
            expected: bank.dim(),
            found: x.ncols(),
        });
    }
    let p = bank.feature_dim();
    let mut values = Array2::zeros((x.nrows(), p));
    values
        .as_slice_mut()
        .expect("standard layout")
        .par_chunks_mut(p.max(1))
        .enumerate()
        .for_each(|(i, out)| bank.features_into(row(x, i), out));
    Ok(FeatureMatrix {
        values,
        draws: bank.draws(),
        n_kernels: bank.n_kernels(),
    })
}

/// Frequencies drawn from the mixture law `sum_l w_l mu_l`; features built
/// from it carry no `sqrt(w_l)` factor.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureBank {
    pub block: FrequencyBlock,
    /// Component index chosen for each draw.
    pub components: Vec<usize>,
}

pub fn sample_mixture_frequencies(
    kernels: &[BaseKernel],
    w: &MixtureWeights,
    draws: usize,
    d: usize,
    seed: u64,
) -> Result<MixtureBank> {
    if kernels.is_empty() || kernels.len() != w.len() {
        return Err(Error::DimensionMismatch {
            expected: kernels.len(),
            found: w.len(),
        });
    }
    if draws == 0 || d == 0 {
        return Err(Error::invalid("need at least one draw and one dimension"));
    }
    let chooser = WeightedIndex::new(w.as_slice()).map_err(|e| Error::invalid(e.to_string()))?;
    let samplers: Vec<SpectralSampler> = kernels.iter().map(|k| SpectralSampler::new(*k)).collect();
    let mut r = rng::stream(seed, rng::streams::MIXTURE_FREQUENCIES);
    let mut frequencies = Array2::zeros((draws, d));
    let mut phases = Vec::with_capacity(draws);
    let mut components = Vec::with_capacity(draws);
    for mut f in frequencies.outer_iter_mut() {
        let l = chooser.sample(&mut r);
        samplers[l].sample_into(f.as_slice_mut().expect("standard layout"), &mut r);
        phases.push(sample_phase(&mut r));
        components.push(l);
    }
    Ok(MixtureBank {
        block: FrequencyBlock { frequencies, phases },
        components,
    })
}
