//! Maximum mean discrepancy between the two class-conditional samples.
//!
//! Two estimators are provided:
//!
//! * [`mmd_biased`]: two within-class U-statistics minus the cross-class
//!   sample average; works for any class sizes `n+, n- >= 2`.
//! * [`mmd_unbiased_balanced`]: a single U-statistic over paired draws
//!   `z_i = (x_i, y_i)` with core
//!   `h(z_i, z_j) = k(x_i,x_j) + k(y_i,y_j) - k(x_i,y_j) - k(x_j,y_i)`;
//!   requires `n+ = n-`.
//!
//! [`score_kernel`] routes between them the same way the training pipeline
//! does: balanced classes use the single U-statistic, everything else the
//! biased estimator. Per-kernel scores are normalized into simplex weights by
//! [`mixing_weights`].
//!
//! The module also carries the population MMD between isotropic Gaussians
//! (closed form plus a Monte-Carlo oracle) and two simulation probes for the
//! consistency rate and the null distribution of the estimator.

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{row, ClassSplit};
use crate::error::{Error, Result};
use crate::kernels::{BaseKernel, KernelFamily};
use crate::rng;
use crate::synthetic::PointSampler;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    Biased,
    UnbiasedBalanced,
}

/// An MMD estimate. `squared` keeps its sign; `value` is clamped at zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MmdScore {
    pub squared: f64,
    pub value: f64,
    pub estimator: Estimator,
    pub n_plus: usize,
    pub n_minus: usize,
}

impl MmdScore {
    fn new(squared: f64, estimator: Estimator, n_plus: usize, n_minus: usize) -> Self {
        Self {
            squared,
            value: squared.max(0.0).sqrt(),
            estimator,
            n_plus,
            n_minus,
        }
    }
}

fn check_dims(pos: &Array2<f64>, neg: &Array2<f64>) -> Result<()> {
    if pos.ncols() != neg.ncols() {
        return Err(Error::DimensionMismatch {
            expected: pos.ncols(),
            found: neg.ncols(),
        });
    }
    for (label, m) in [(1, pos), (-1, neg)] {
        if m.nrows() < 2 {
            return Err(Error::ClassTooSmall {
                label,
                found: m.nrows(),
                required: 2,
            });
        }
    }
    Ok(())
}

/// `sum_{i != j} k(x_i, x_j)` over the rows of one sample.
fn within_sum(k: &BaseKernel, x: &Array2<f64>) -> f64 {
    let n = x.nrows();
    let mut total = 0.0;
    for i in 0..n {
        let xi = row(x, i);
        let mut acc = 0.0;
        for j in i + 1..n {
            acc += k.eval(xi, row(x, j));
        }
        total += acc;
    }
    2.0 * total
}

/// `sum_i sum_j k(a_i, b_j)`.
fn cross_sum(k: &BaseKernel, a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    let mut total = 0.0;
    for i in 0..a.nrows() {
        let ai = row(a, i);
        let mut acc = 0.0;
        for j in 0..b.nrows() {
            acc += k.eval(ai, row(b, j));
        }
        total += acc;
    }
    total
}

/// Biased squared-MMD estimate (two U-statistics and a cross average).
pub fn mmd_biased(k: &BaseKernel, pos: &Array2<f64>, neg: &Array2<f64>) -> Result<MmdScore> {
    check_dims(pos, neg)?;
    let (np, nm) = (pos.nrows() as f64, neg.nrows() as f64);
    let squared = within_sum(k, pos) / (np * (np - 1.0)) + within_sum(k, neg) / (nm * (nm - 1.0))
        - 2.0 * cross_sum(k, pos, neg) / (np * nm);
    Ok(MmdScore::new(squared, Estimator::Biased, pos.nrows(), neg.nrows()))
}

/// Single U-statistic over the pairs `z_i = (pos_i, neg_i)`.
pub fn mmd_unbiased_balanced(k: &BaseKernel, pos: &Array2<f64>, neg: &Array2<f64>) -> Result<MmdScore> {
    check_dims(pos, neg)?;
    if pos.nrows() != neg.nrows() {
        return Err(Error::Unbalanced {
            n_plus: pos.nrows(),
            n_minus: neg.nrows(),
        });
    }
    let n = pos.nrows();
    // h is symmetric in (z_i, z_j), so the ordered sum is twice the i < j sum.
    // Summing h term by term keeps exact cancellation when pos == neg.
    let mut total = 0.0;
    for i in 0..n {
        let (xi, yi) = (row(pos, i), row(neg, i));
        let mut acc = 0.0;
        for j in i + 1..n {
            let (xj, yj) = (row(pos, j), row(neg, j));
            acc += k.eval(xi, xj) + k.eval(yi, yj) - k.eval(xi, yj) - k.eval(xj, yi);
        }
        total += acc;
    }
    let total = 2.0 * total;
    let n = n as f64;
    Ok(MmdScore::new(
        total / (n * (n - 1.0)),
        Estimator::UnbiasedBalanced,
        pos.nrows(),
        neg.nrows(),
    ))
}

/// Estimator routing for per-kernel scores.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreOptions {
    /// Use the single U-statistic when classes are balanced.
    pub prefer_unbiased: bool,
    /// Shuffles the negatives before pairing them with the positives.
    pub pairing_seed: Option<u64>,
}

impl Default for ScoreOptions {
    fn default() -> Self {
        Self {
            prefer_unbiased: true,
            pairing_seed: None,
        }
    }
}

impl ScoreOptions {
    pub fn biased() -> Self {
        Self {
            prefer_unbiased: false,
            pairing_seed: None,
        }
    }

    fn paired_negatives(&self, split: &ClassSplit) -> Option<Array2<f64>> {
        let seed = self.pairing_seed?;
        let mut idx: Vec<usize> = (0..split.n_minus()).collect();
        idx.shuffle(&mut rng::stream(seed, rng::streams::PAIRING));
        Some(split.negatives.select(Axis(0), &idx))
    }
}

/// Scores one kernel, choosing the estimator by class balance.
pub fn score_kernel(k: &BaseKernel, split: &ClassSplit, opts: &ScoreOptions) -> Result<MmdScore> {
    if opts.prefer_unbiased && split.is_balanced() {
        match opts.paired_negatives(split) {
            Some(neg) => mmd_unbiased_balanced(k, &split.positives, &neg),
            None => mmd_unbiased_balanced(k, &split.positives, &split.negatives),
        }
    } else {
        mmd_biased(k, &split.positives, &split.negatives)
    }
}

/// Weights on the probability simplex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct MixtureWeights(Vec<f64>);

impl MixtureWeights {
    /// Accepts nonnegative weights summing to one within `1e-9`; sums off by
    /// more than `1e-12` are renormalized, others are kept bit for bit.
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::invalid("mixture weights must be nonempty"));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::invalid("mixture weights must be finite and nonnegative"));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!("mixture weights sum to {sum}, not 1")));
        }
        if (sum - 1.0).abs() > 1e-12 {
            return Ok(Self(normalize(weights)));
        }
        Ok(Self(weights))
    }

    pub fn uniform(m: usize) -> Self {
        Self(vec![1.0 / m as f64; m])
    }

    /// One-hot weights `e_l`.
    pub fn one_hot(m: usize, l: usize) -> Self {
        let mut w = vec![0.0; m];
        w[l] = 1.0;
        Self(w)
    }

    /// `w_l = D_l / sum D`; all-zero scores fall back to uniform (second field).
    pub fn from_scores(scores: &[f64]) -> Result<(Self, bool)> {
        if scores.is_empty() {
            return Err(Error::invalid("no scores"));
        }
        if scores.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(Error::invalid("scores must be finite and nonnegative"));
        }
        let total: f64 = scores.iter().sum();
        if total == 0.0 {
            return Ok((Self::uniform(scores.len()), true));
        }
        Ok((Self(normalize(scores.iter().map(|s| s / total).collect())), false))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn max(&self) -> f64 {
        self.0.iter().copied().fold(0.0, f64::max)
    }
}

impl TryFrom<Vec<f64>> for MixtureWeights {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<MixtureWeights> for Vec<f64> {
    fn from(w: MixtureWeights) -> Self {
        w.0
    }
}

fn normalize(mut w: Vec<f64>) -> Vec<f64> {
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= s);
    w
}

/// Per-kernel scores and the resulting mixture weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Mixing {
    pub weights: MixtureWeights,
    pub scores: Vec<MmdScore>,
    /// Every score was zero and the weights fell back to uniform.
    pub degenerate: bool,
}

/// Scores each kernel and normalizes the MMD values (not their squares).
pub fn mixing_weights(kernels: &[BaseKernel], split: &ClassSplit, opts: &ScoreOptions) -> Result<Mixing> {
    if kernels.is_empty() {
        return Err(Error::invalid("at least one kernel required"));
    }
    let scores = kernels
        .iter()
        .map(|k| score_kernel(k, split, opts))
        .collect::<Result<Vec<_>>>()?;
    let values: Vec<f64> = scores.iter().map(|s| s.value).collect();
    let (weights, degenerate) = MixtureWeights::from_scores(&values)?;
    Ok(Mixing {
        weights,
        scores,
        degenerate,
    })
}

// ---------------------------------------------------------------------------
// Score report (JSON / CSV)

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelScoreEntry {
    pub family: KernelFamily,
    pub bandwidth: f64,
    pub gamma: f64,
    pub estimator: Estimator,
    pub n_plus: usize,
    pub n_minus: usize,
    pub squared: f64,
    pub value: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub schema_version: u32,
    pub degenerate: bool,
    pub kernels: Vec<KernelScoreEntry>,
}

impl ScoreReport {
    pub fn new(kernels: &[BaseKernel], mixing: &Mixing) -> Self {
        let entries = kernels
            .iter()
            .zip(&mixing.scores)
            .zip(mixing.weights.as_slice())
            .map(|((k, s), &w)| KernelScoreEntry {
                family: k.family,
                bandwidth: k.bandwidth,
                gamma: k.gamma(),
                estimator: s.estimator,
                n_plus: s.n_plus,
                n_minus: s.n_minus,
                squared: s.squared,
                value: s.value,
                weight: w,
            })
            .collect();
        Self {
            schema_version: SCHEMA_VERSION,
            degenerate: mixing.degenerate,
            kernels: entries,
        }
    }

    /// CSV columns: family,bandwidth,gamma,estimator,n_plus,n_minus,squared,value,weight
    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for e in &self.kernels {
            w.serialize(e)?;
        }
        w.flush().map_err(|e| Error::io("<csv writer>", e))?;
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Population MMD between isotropic Gaussians

/// Candidate closed forms for the squared MMD between `N(mu_P, s^2 I)` and
/// `N(mu_Q, s^2 I)` under a Gaussian kernel of bandwidth `rho`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClosedFormVariant {
    /// `2 (rho^2/(rho^2+s^2))^{d/2} (1 - exp(-|dmu|^2/(2 rho^2 + s^2)))`
    Printed,
    /// `2 (rho^2/(rho^2+2 s^2))^{d/2} (1 - exp(-|dmu|^2/(2 rho^2 + 4 s^2)))`,
    /// from convolving the kernel with the `N(0, 2 s^2 I)` law of `x - x'`.
    Convolution,
}

/// The variant that agrees with the Monte-Carlo oracle
/// ([`monte_carlo_gaussian_mmd_squared`]); frozen after validation.
pub const VALIDATED_CLOSED_FORM: ClosedFormVariant = ClosedFormVariant::Convolution;

pub fn gaussian_mmd_squared(
    mu_p: &[f64],
    mu_q: &[f64],
    sigma2: f64,
    rho: f64,
    variant: ClosedFormVariant,
) -> Result<f64> {
    if mu_p.len() != mu_q.len() {
        return Err(Error::DimensionMismatch {
            expected: mu_p.len(),
            found: mu_q.len(),
        });
    }
    if !(sigma2 >= 0.0) || !(rho > 0.0) {
        return Err(Error::invalid("need sigma^2 >= 0 and rho > 0"));
    }
    let d = mu_p.len() as f64;
    let delta2: f64 = mu_p.iter().zip(mu_q).map(|(a, b)| (a - b) * (a - b)).sum();
    let rho2 = rho * rho;
    let (base, denom) = match variant {
        ClosedFormVariant::Printed => (rho2 / (rho2 + sigma2), 2.0 * rho2 + sigma2),
        ClosedFormVariant::Convolution => (rho2 / (rho2 + 2.0 * sigma2), 2.0 * rho2 + 4.0 * sigma2),
    };
    Ok(2.0 * base.powf(d / 2.0) * -(-delta2 / denom).exp_m1())
}

/// Population MMD (not squared) between `N(mu_P, s^2 I)` and `N(mu_Q, s^2 I)`.
pub fn gaussian_mmd_closed_form(mu_p: &[f64], mu_q: &[f64], sigma2: f64, rho: f64) -> Result<f64> {
    Ok(gaussian_mmd_squared(mu_p, mu_q, sigma2, rho, VALIDATED_CLOSED_FORM)?
        .max(0.0)
        .sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub draws: usize,
}

/// Monte-Carlo estimate of `E[k(x,x') + k(y,y') - k(x,y') - k(x',y)]` with
/// `x, x' ~ P` and `y, y' ~ Q` drawn independently.
pub fn monte_carlo_gaussian_mmd_squared(
    mu_p: &[f64],
    mu_q: &[f64],
    sigma2: f64,
    rho: f64,
    draws: usize,
    seed: u64,
) -> Result<MonteCarloEstimate> {
    if mu_p.len() != mu_q.len() || draws < 2 {
        return Err(Error::invalid("monte carlo needs matching means and >= 2 draws"));
    }
    let k = BaseKernel::gaussian(rho)?;
    let d = mu_p.len();
    let sigma = sigma2.sqrt();
    let mut rng = rng::stream(seed, 0);
    let mut buf = vec![0.0; 4 * d];
    let (mut mean, mut m2) = (0.0, 0.0);
    for t in 0..draws {
        for (i, v) in buf.iter_mut().enumerate() {
            let mu = if (i / d) < 2 { mu_p[i % d] } else { mu_q[i % d] };
            let z: f64 = StandardNormal.sample(&mut rng);
            *v = mu + sigma * z;
        }
        let (x, rest) = buf.split_at(d);
        let (x2, rest) = rest.split_at(d);
        let (y, y2) = rest.split_at(d);
        let h = k.eval(x, x2) + k.eval(y, y2) - k.eval(x, y2) - k.eval(x2, y);
        // Welford update.
        let delta = h - mean;
        mean += delta / (t + 1) as f64;
        m2 += delta * (h - mean);
    }
    let var = m2 / (draws - 1) as f64;
    Ok(MonteCarloEstimate {
        mean,
        std_error: (var / draws as f64).sqrt(),
        draws,
    })
}

// ---------------------------------------------------------------------------
// Simulation probes

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub n: usize,
    pub mean_abs_error: f64,
    pub std_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceTable {
    pub population: f64,
    pub trials: usize,
    pub rows: Vec<ConvergenceRow>,
    /// Least-squares slope of `ln(mean_abs_error)` against `ln(n)`.
    pub slope: f64,
}

/// Mean absolute error of the balanced U-statistic MMD against `population`
/// for each sample size (per class) in `sizes`.
pub fn mmd_convergence_probe(
    p: &dyn PointSampler,
    q: &dyn PointSampler,
    k: &BaseKernel,
    sizes: &[usize],
    trials: usize,
    seed: u64,
    population: f64,
) -> Result<ConvergenceTable> {
    if sizes.len() < 2 || trials < 2 || sizes.iter().any(|&n| n < 2) {
        return Err(Error::invalid("probe needs >= 2 sizes (each >= 2) and >= 2 trials"));
    }
    let mut rows = Vec::with_capacity(sizes.len());
    for &n in sizes {
        let errors = (0..trials)
            .into_par_iter()
            .map(|t| {
                let mut r = rng::stream(rng::derive_seed(seed, n as u64), t as u64);
                let pos = p.sample(n, &mut r);
                let neg = q.sample(n, &mut r);
                mmd_unbiased_balanced(k, &pos, &neg).map(|s| (s.value - population).abs())
            })
            .collect::<Result<Vec<f64>>>()?;
        let (mean, sd) = mean_std(&errors);
        rows.push(ConvergenceRow {
            n,
            mean_abs_error: mean,
            std_error: sd / (trials as f64).sqrt(),
        });
    }
    let xs: Vec<f64> = rows.iter().map(|r| (r.n as f64).ln()).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.mean_abs_error.ln()).collect();
    Ok(ConvergenceTable {
        population,
        trials,
        rows,
        slope: ols_slope(&xs, &ys),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NullSummary {
    pub n0: usize,
    pub trials: usize,
    /// Mean and sample std of the squared-MMD draws.
    pub mean: f64,
    pub std: f64,
    /// Moments of `sqrt(n0) * squared` draws.
    pub scaled_mean: f64,
    pub scaled_std: f64,
    pub skewness: f64,
    pub excess_kurtosis: f64,
    /// Jarque-Bera statistic of the scaled draws.
    pub jarque_bera: f64,
    /// `|mean| <= 3 std / sqrt(trials)`.
    pub mean_consistent_with_zero: bool,
}

/// Distribution of the balanced U-statistic when both classes come from `sampler`.
pub fn mmd_null_distribution_probe(
    sampler: &dyn PointSampler,
    k: &BaseKernel,
    n0: usize,
    trials: usize,
    seed: u64,
) -> Result<NullSummary> {
    if n0 < 2 || trials < 2 {
        return Err(Error::invalid("null probe needs n0 >= 2 and trials >= 2"));
    }
    let draws = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut r = rng::stream(seed, t as u64);
            let pos = sampler.sample(n0, &mut r);
            let neg = sampler.sample(n0, &mut r);
            mmd_unbiased_balanced(k, &pos, &neg).map(|s| s.squared)
        })
        .collect::<Result<Vec<f64>>>()?;
    let (mean, std) = mean_std(&draws);
    let scale = (n0 as f64).sqrt();
    let scaled: Vec<f64> = draws.iter().map(|v| v * scale).collect();
    let (scaled_mean, scaled_std) = mean_std(&scaled);
    let (skewness, excess_kurtosis) = shape(&scaled, scaled_mean);
    let t = trials as f64;
    Ok(NullSummary {
        n0,
        trials,
        mean,
        std,
        scaled_mean,
        scaled_std,
        skewness,
        excess_kurtosis,
        jarque_bera: t / 6.0 * (skewness * skewness + excess_kurtosis * excess_kurtosis / 4.0),
        mean_consistent_with_zero: mean.abs() <= 3.0 * std / t.sqrt(),
    })
}

/// Mean and sample standard deviation (divisor `n - 1`).
pub(crate) fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn shape(v: &[f64], mean: f64) -> (f64, f64) {
    let n = v.len() as f64;
    let m2 = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let m3 = v.iter().map(|x| (x - mean).powi(3)).sum::<f64>() / n;
    let m4 = v.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / n;
    if m2 == 0.0 {
        return (0.0, 0.0);
    }
    (m3 / m2.powf(1.5), m4 / (m2 * m2) - 3.0)
}

pub(crate) fn ols_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}
