//! Computable complexity bounds and concentration checks for feature matrices.

use ndarray::Array2;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::data::row;
use crate::error::{Error, Result};
use crate::kernels::{mixture_gram, BaseKernel};
use crate::linalg::{gram_of_columns, gram_of_rows, spectral_norm, symmetric_spectral_norm};
use crate::mmd::{mean_std, MixtureWeights, SCHEMA_VERSION};
use crate::rff::{build_feature_matrix, kernel_approx, sample_frequencies, FeatureBank, FeatureMatrix, SpectralSampler};
use crate::rng;

/// Dense eigensolves are limited to this many rows.
pub const SPECTRAL_ROW_LIMIT: usize = 2000;

/// Norms of a feature matrix and the complexity bounds computed from them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexityReport {
    pub schema_version: u32,
    pub n: usize,
    pub draws: usize,
    pub n_kernels: usize,
    pub radius: f64,
    pub frobenius: f64,
    pub spectral: f64,
    /// `Tr((Phi Phi^T)^2)`.
    pub trace_gram_squared: f64,
    /// `R/(nD sqrt(m)) sqrt(pi/192) |Phi|_2 erfc(sqrt(192) |Phi|_F / |Phi|_2)`.
    pub erfc_bound: f64,
    /// `R/(nD) sqrt(pi/192) |Phi|_2 erfc(sqrt(192 D))`.
    pub erfc_bound_displayed: f64,
    /// `R/(nD sqrt(m)) sqrt(23/44) |Phi|_F`.
    pub khintchine_bound: f64,
    pub gaussian_bound: f64,
}

impl ComplexityReport {
    /// The erfc bound never exceeds the Khintchine bound.
    pub fn ordering_holds(&self) -> bool {
        self.erfc_bound <= self.khintchine_bound
    }
}

/// Rademacher and Gaussian complexity bounds for `F_m(R)` evaluated on `phi`.
pub fn complexity_bounds(phi: &FeatureMatrix, radius: f64) -> Result<ComplexityReport> {
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::invalid("radius must be positive"));
    }
    let values = &phi.values;
    let frobenius = values.iter().map(|v| v * v).sum::<f64>().sqrt();
    if frobenius == 0.0 || phi.nrows() == 0 {
        return Err(Error::ZeroNorm);
    }
    if !frobenius.is_finite() {
        return Err(Error::NonFinite("feature matrix".into()));
    }
    // Phi Phi^T and Phi^T Phi share their nonzero spectrum; use the smaller.
    let gram = if values.nrows() <= values.ncols() {
        gram_of_rows(values)
    } else {
        gram_of_columns(values)
    };
    let trace_gram_squared = gram.iter().map(|v| v * v).sum::<f64>();
    let spectral = symmetric_spectral_norm(&gram).sqrt();

    let n = phi.nrows() as f64;
    let d = phi.draws as f64;
    let m = phi.n_kernels as f64;
    let base = radius / (n * d);
    let c = (std::f64::consts::PI / 192.0).sqrt();
    let erfc_bound = base / m.sqrt() * c * spectral * erfc(192f64.sqrt() * frobenius / spectral);
    let erfc_bound_displayed = base * c * spectral * erfc((192.0 * d).sqrt());
    let khintchine_bound = base / m.sqrt() * (23.0f64 / 44.0).sqrt() * frobenius;
    let gaussian_bound = base
        * (2.0 * (std::f64::consts::PI * trace_gram_squared).sqrt() / frobenius
            + frobenius / (2.0 * spectral * spectral) * (-frobenius.powi(4) / (4.0 * trace_gram_squared)).exp());

    Ok(ComplexityReport {
        schema_version: SCHEMA_VERSION,
        n: phi.nrows(),
        draws: phi.draws,
        n_kernels: phi.n_kernels,
        radius,
        frobenius,
        spectral,
        trace_gram_squared,
        erfc_bound,
        erfc_bound_displayed,
        khintchine_bound,
        gaussian_bound,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormKind {
    Frobenius,
    Spectral,
}

/// Relative deviations of a feature-matrix norm from `D` times the matching
/// kernel-matrix quantity, one per seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationReport {
    pub kind: NormKind,
    pub draws: usize,
    pub seeds: Vec<u64>,
    pub deviations: Vec<f64>,
    pub max: f64,
    pub mean: f64,
}

#[derive(Serialize)]
struct ConcentrationRow {
    kind: NormKind,
    draws: usize,
    seed: u64,
    deviation: f64,
}

impl ConcentrationReport {
    fn new(kind: NormKind, draws: usize, seeds: &[u64], deviations: Vec<f64>) -> Self {
        let max = deviations.iter().copied().fold(0.0, f64::max);
        let (mean, _) = mean_std(&deviations);
        Self {
            kind,
            draws,
            seeds: seeds.to_vec(),
            deviations,
            max,
            mean,
        }
    }

    /// Columns `kind,draws,seed,deviation`.
    pub fn write_csv<W: std::io::Write>(reports: &[ConcentrationReport], w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        for r in reports {
            for (&seed, &deviation) in r.seeds.iter().zip(&r.deviations) {
                out.serialize(ConcentrationRow {
                    kind: r.kind,
                    draws: r.draws,
                    seed,
                    deviation,
                })?;
            }
        }
        out.flush().map_err(|e| Error::io("<csv>", e))
    }
}

fn check_seeds(seeds: &[u64]) -> Result<()> {
    if seeds.is_empty() {
        return Err(Error::invalid("at least one seed required"));
    }
    Ok(())
}

/// `| |Phi|_F^2 - D Tr(K^w) | / (D Tr(K^w))` for each seed.
pub fn frobenius_concentration(
    x: &Array2<f64>,
    kernels: &[BaseKernel],
    w: &MixtureWeights,
    draws: usize,
    seeds: &[u64],
) -> Result<ConcentrationReport> {
    check_seeds(seeds)?;
    let trace: f64 = (0..x.nrows())
        .map(|i| {
            let xi = row(x, i);
            kernels.iter().zip(w.as_slice()).map(|(k, wl)| wl * k.eval(xi, xi)).sum::<f64>()
        })
        .sum();
    let target = draws as f64 * trace;
    let deviations = seeds
        .par_iter()
        .map(|&seed| {
            let bank = FeatureBank::new(kernels.to_vec(), w.clone(), draws, x.ncols(), seed)?;
            let phi = build_feature_matrix(x, &bank)?;
            let fro2: f64 = phi.values.iter().map(|v| v * v).sum();
            Ok((fro2 - target).abs() / target)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(ConcentrationReport::new(NormKind::Frobenius, draws, seeds, deviations))
}

/// `| |Phi|_2^2 - D |K^w|_2 | / (D |K^w|_2)` for each seed.
pub fn spectral_concentration(
    x: &Array2<f64>,
    kernels: &[BaseKernel],
    w: &MixtureWeights,
    draws: usize,
    seeds: &[u64],
) -> Result<ConcentrationReport> {
    check_seeds(seeds)?;
    if x.nrows() > SPECTRAL_ROW_LIMIT {
        return Err(Error::Unsupported(format!(
            "spectral concentration needs n <= {SPECTRAL_ROW_LIMIT}, got {}",
            x.nrows()
        )));
    }
    let k_norm = symmetric_spectral_norm(&mixture_gram(kernels, w, x)?.0);
    let target = draws as f64 * k_norm;
    let deviations = seeds
        .par_iter()
        .map(|&seed| {
            let bank = FeatureBank::new(kernels.to_vec(), w.clone(), draws, x.ncols(), seed)?;
            let phi = build_feature_matrix(x, &bank)?;
            let s = spectral_norm(&phi.values);
            Ok((s * s - target).abs() / target)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(ConcentrationReport::new(NormKind::Spectral, draws, seeds, deviations))
}

/// `min(1, 2^8 (sigma_p diam / eps)^2 exp(-D eps^2 / (4 (d + 2))))`.
pub fn pointwise_error_bound(eps: f64, draws: usize, d: usize, sigma_p: f64, diam: f64) -> Result<f64> {
    let raw = pointwise_raw(eps, draws, d, sigma_p, diam)?;
    Ok(raw.min(1.0))
}

fn pointwise_raw(eps: f64, draws: usize, d: usize, sigma_p: f64, diam: f64) -> Result<f64> {
    if !sigma_p.is_finite() {
        return Err(Error::Unsupported(
            "pointwise bound needs a finite spectral second moment (not available for the Laplacian kernel)".into(),
        ));
    }
    if !(eps > 0.0) || sigma_p < 0.0 || !(diam >= 0.0 && diam.is_finite()) || d == 0 {
        return Err(Error::invalid("pointwise bound needs eps > 0, sigma_p >= 0, diam >= 0, d >= 1"));
    }
    let ratio = sigma_p * diam / eps;
    Ok(256.0 * ratio * ratio * (-(draws as f64) * eps * eps / (4.0 * (d as f64 + 2.0))).exp())
}

/// Smallest `D` for which the pointwise bound drops to `delta`.
pub fn required_draws(eps: f64, d: usize, sigma_p: f64, diam: f64, delta: f64) -> Result<usize> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::invalid("delta must lie in (0, 1)"));
    }
    let lead = pointwise_raw(eps, 0, d, sigma_p, diam)?;
    if lead <= delta {
        return Ok(1);
    }
    Ok((4.0 * (d as f64 + 2.0) / (eps * eps) * (lead / delta).ln()).ceil() as usize)
}

/// Bound value, whether it is vacuous, and the draws needed for `delta`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointwiseReport {
    pub eps: f64,
    pub draws: usize,
    pub dim: usize,
    pub sigma_p: f64,
    pub diameter: f64,
    pub bound: f64,
    pub vacuous: bool,
    pub delta: f64,
    pub required_draws: usize,
}

pub fn pointwise_report(kernel: &BaseKernel, eps: f64, draws: usize, d: usize, diam: f64, delta: f64) -> Result<PointwiseReport> {
    let sigma_p = SpectralSampler::new(*kernel).second_moment(d).sqrt();
    let bound = pointwise_error_bound(eps, draws, d, sigma_p, diam)?;
    Ok(PointwiseReport {
        eps,
        draws,
        dim: d,
        sigma_p,
        diameter: diam,
        bound,
        vacuous: bound >= 1.0,
        delta,
        required_draws: required_draws(eps, d, sigma_p, diam, delta)?,
    })
}

/// `max |kernel_approx - k|` over `pairs` random index pairs of `points`,
/// all using one bank of `draws` frequencies drawn from `seed`.
pub fn empirical_sup_error(kernel: &BaseKernel, draws: usize, points: &Array2<f64>, pairs: usize, seed: u64) -> Result<f64> {
    if pairs == 0 || points.nrows() == 0 {
        return Err(Error::invalid("need at least one pair and one point"));
    }
    let block = sample_frequencies(kernel, draws, points.ncols(), seed)?;
    let mut r = rng::stream(seed, rng::streams::PAIRS);
    let n = points.nrows();
    let mut worst = 0.0f64;
    for _ in 0..pairs {
        let (i, j) = (r.random_range(0..n), r.random_range(0..n));
        let (x, y) = (row(points, i), row(points, j));
        worst = worst.max((kernel_approx(x, y, &block) - kernel.eval(x, y)).abs());
    }
    Ok(worst)
}
