//! Bandwidth selection (cross-validation against MMD scoring) and relaxed
//! kernel feature selection.

use std::time::Instant;

use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::data::{kfold_split, row, split_by_label, train_test_split, LabeledDataset};
use crate::error::{Error, Result};
use crate::kernels::{BaseKernel, KernelFamily};
use crate::linalg::SpdSolver;
use crate::mmd::{mean_std, mixing_weights, score_kernel, MixtureWeights, ScoreOptions, SCHEMA_VERSION};
use crate::rff::{sample_frequencies, FrequencyBlock};
use crate::svm::{fit_mixture, fit_weighted, TrainConfig};

/// Candidate `gamma` values for Gaussian kernels, strictly increasing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct BandwidthGrid(Vec<f64>);

impl BandwidthGrid {
    pub fn new(gammas: Vec<f64>) -> Result<Self> {
        if gammas.is_empty() {
            return Err(Error::invalid("bandwidth grid is empty"));
        }
        if gammas.iter().any(|g| !(g.is_finite() && *g > 0.0)) {
            return Err(Error::invalid("grid values must be positive"));
        }
        if gammas.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("grid must be strictly increasing"));
        }
        Ok(Self(gammas))
    }

    /// `count` values evenly spaced in `log10` between `lo` and `hi`.
    pub fn log_spaced(lo: f64, hi: f64, count: usize) -> Result<Self> {
        if !(lo > 0.0 && hi > lo) || count == 0 {
            return Err(Error::invalid("log grid needs 0 < lo < hi and count >= 1"));
        }
        if count == 1 {
            return Self::new(vec![lo]);
        }
        let (a, b) = (lo.log10(), hi.log10());
        let step = (b - a) / (count - 1) as f64;
        Self::new((0..count).map(|i| 10f64.powf(a + step * i as f64)).collect())
    }

    pub fn gammas(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn kernels(&self) -> Vec<BaseKernel> {
        self.0
            .iter()
            .map(|&g| BaseKernel::from_gamma(KernelFamily::Gaussian, g).expect("validated"))
            .collect()
    }
}

impl Default for BandwidthGrid {
    /// Nine values from `1e-20` to `1e3`.
    fn default() -> Self {
        Self::log_spaced(1e-20, 1e3, 9).expect("valid constants")
    }
}

impl TryFrom<Vec<f64>> for BandwidthGrid {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<BandwidthGrid> for Vec<f64> {
    fn from(g: BandwidthGrid) -> Self {
        g.0
    }
}

/// First index of the maximum (ties go to the smaller `gamma`).
fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectConfig {
    pub folds: usize,
    /// Random features per kernel.
    pub draws: usize,
    pub train: TrainConfig,
    pub score: ScoreOptions,
    /// Held-out fraction used by [`compare_selection`].
    pub test_fraction: f64,
}

impl Default for SelectConfig {
    fn default() -> Self {
        Self {
            folds: 5,
            draws: 256,
            train: TrainConfig::default(),
            score: ScoreOptions::default(),
            test_fraction: 0.25,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvSelection {
    pub best_gamma: f64,
    pub best_index: usize,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// `k`-fold validation accuracy of a single Gaussian kernel per grid value.
pub fn cv_bandwidth_select(ds: &LabeledDataset, grid: &BandwidthGrid, cfg: &SelectConfig, seed: u64) -> Result<CvSelection> {
    let folds = kfold_split(ds, cfg.folds, seed)?;
    let train_cfg = TrainConfig { seed, ..cfg.train.clone() };
    let mut mean = Vec::with_capacity(grid.len());
    let mut std = Vec::with_capacity(grid.len());
    for k in grid.kernels() {
        let acc = folds
            .iter()
            .map(|f| {
                let train = ds.subset(&f.train);
                let model = fit_weighted(&train, &[k], MixtureWeights::uniform(1), cfg.draws, &train_cfg)?;
                Ok(model.evaluate(&ds.subset(&f.validation))?.accuracy)
            })
            .collect::<Result<Vec<f64>>>()?;
        let (m, s) = mean_std(&acc);
        mean.push(m);
        std.push(s);
    }
    let best_index = argmax(&mean);
    Ok(CvSelection {
        best_gamma: grid.gammas()[best_index],
        best_index,
        mean,
        std,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MmdSelection {
    pub best_gamma: f64,
    pub best_index: usize,
    pub scores: Vec<f64>,
    /// Every score is zero.
    pub degenerate: bool,
}

/// Scores each grid kernel by MMD between the classes; no training.
pub fn mmd_bandwidth_select(ds: &LabeledDataset, grid: &BandwidthGrid, opts: &ScoreOptions) -> Result<MmdSelection> {
    let split = split_by_label(ds)?;
    let scores = grid
        .kernels()
        .iter()
        .map(|k| score_kernel(k, &split, opts).map(|s| s.value))
        .collect::<Result<Vec<f64>>>()?;
    let best_index = argmax(&scores);
    Ok(MmdSelection {
        best_gamma: grid.gammas()[best_index],
        best_index,
        degenerate: scores.iter().all(|&s| s == 0.0),
        scores,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionRow {
    pub gamma: f64,
    pub cv_mean: f64,
    pub cv_std: f64,
    pub mmd_score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub schema_version: u32,
    pub rows: Vec<SelectionRow>,
    pub cv_best_gamma: f64,
    pub mmd_best_gamma: f64,
    /// Selected grid indices differ by at most one.
    pub agreement: bool,
    pub degenerate: bool,
    pub mixture_weights: Vec<f64>,
    pub test_accuracy_cv: f64,
    pub test_accuracy_mmd: f64,
    pub test_accuracy_mixture: f64,
    /// Wall-clock seconds; excluded from serialized output.
    #[serde(skip)]
    pub cv_seconds: f64,
    #[serde(skip)]
    pub mmd_seconds: f64,
}

impl SelectionReport {
    pub fn best_cv_accuracy(&self) -> f64 {
        self.rows.iter().map(|r| r.cv_mean).fold(f64::NEG_INFINITY, f64::max)
    }

    /// Columns `gamma,cv_mean,cv_std,mmd_score`.
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        for r in &self.rows {
            out.serialize(r)?;
        }
        out.flush().map_err(|e| Error::io("<csv>", e))
    }
}

/// Runs both selectors on a training split, then trains the CV choice, the
/// MMD choice and the MMD-weighted mixture over the whole grid, and scores
/// all three on the held-out split.
pub fn compare_selection(ds: &LabeledDataset, grid: &BandwidthGrid, cfg: &SelectConfig, seed: u64) -> Result<SelectionReport> {
    let (train, test) = train_test_split(ds, cfg.test_fraction, seed)?;

    let start = Instant::now();
    let mmd = mmd_bandwidth_select(&train, grid, &cfg.score)?;
    let mmd_seconds = start.elapsed().as_secs_f64();

    let start = Instant::now();
    let cv = cv_bandwidth_select(&train, grid, cfg, seed)?;
    let cv_seconds = start.elapsed().as_secs_f64();

    let train_cfg = TrainConfig { seed, ..cfg.train.clone() };
    let kernels = grid.kernels();
    let single = |i: usize| -> Result<f64> {
        let m = fit_weighted(&train, &kernels[i..=i], MixtureWeights::uniform(1), cfg.draws, &train_cfg)?;
        Ok(m.evaluate(&test)?.accuracy)
    };
    let test_accuracy_cv = single(cv.best_index)?;
    let test_accuracy_mmd = if mmd.best_index == cv.best_index {
        test_accuracy_cv
    } else {
        single(mmd.best_index)?
    };
    let mixture = fit_mixture(&train, &kernels, cfg.draws, &train_cfg, &cfg.score)?;
    let test_accuracy_mixture = mixture.model.evaluate(&test)?.accuracy;

    let rows = (0..grid.len())
        .map(|i| SelectionRow {
            gamma: grid.gammas()[i],
            cv_mean: cv.mean[i],
            cv_std: cv.std[i],
            mmd_score: mmd.scores[i],
        })
        .collect();
    Ok(SelectionReport {
        schema_version: SCHEMA_VERSION,
        rows,
        cv_best_gamma: cv.best_gamma,
        mmd_best_gamma: mmd.best_gamma,
        agreement: cv.best_index.abs_diff(mmd.best_index) <= 1,
        degenerate: mmd.degenerate,
        mixture_weights: mixture.mixing.weights.as_slice().to_vec(),
        test_accuracy_cv,
        test_accuracy_mmd,
        test_accuracy_mixture,
        cv_seconds,
        mmd_seconds,
    })
}

/// Mixing weights of the grid kernels on `ds` (the mixture used by
/// [`compare_selection`]).
pub fn grid_mixture_weights(ds: &LabeledDataset, grid: &BandwidthGrid, opts: &ScoreOptions) -> Result<MixtureWeights> {
    Ok(mixing_weights(&grid.kernels(), &split_by_label(ds)?, opts)?.weights)
}

// ---------------------------------------------------------------------------
// Feature selection

/// How the kernel on masked inputs `omega * x` is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum SelectionKernel {
    Exact { kernel: BaseKernel },
    RandomFeatures { kernel: BaseKernel, draws: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSelectConfig {
    pub m_sel: usize,
    /// Total ridge `c` added to the centered Gram matrix.
    pub epsilon: f64,
    pub steps: usize,
    pub seed: u64,
}

impl Default for FeatureSelectConfig {
    fn default() -> Self {
        Self {
            m_sel: 1,
            epsilon: 1e-3,
            steps: 100,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMask {
    pub mask: Vec<bool>,
    pub m_sel: usize,
    pub relaxed: Vec<f64>,
    pub initial_objective: f64,
    pub final_objective: f64,
    pub iterations: usize,
}

impl FeatureMask {
    pub fn selected(&self) -> Vec<usize> {
        (0..self.mask.len()).filter(|&i| self.mask[i]).collect()
    }
}

/// `J(omega) = y^T (H K_omega H + c I)^{-1} y`, where `K_omega` is the kernel
/// on the inputs scaled coordinate-wise by `omega` and `H` centers.
pub struct RelaxedObjective<'a> {
    x: &'a Array2<f64>,
    y: Array1<f64>,
    c: f64,
    kernel: BaseKernel,
    features: Option<FrequencyBlock>,
}

fn center(v: &Array1<f64>) -> Array1<f64> {
    let m = v.mean().unwrap_or(0.0);
    v.mapv(|a| a - m)
}

impl<'a> RelaxedObjective<'a> {
    pub fn new(x: &'a Array2<f64>, y: &[i8], mode: SelectionKernel, epsilon: f64, seed: u64) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(Error::DimensionMismatch {
                expected: x.nrows(),
                found: y.len(),
            });
        }
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::invalid("epsilon must be positive"));
        }
        let (kernel, features) = match mode {
            SelectionKernel::Exact { kernel } => (kernel, None),
            SelectionKernel::RandomFeatures { kernel, draws } => {
                (kernel, Some(sample_frequencies(&kernel, draws, x.ncols(), seed)?))
            }
        };
        Ok(Self {
            x,
            y: y.iter().map(|&l| f64::from(l)).collect(),
            c: epsilon,
            kernel,
            features,
        })
    }

    pub fn dim(&self) -> usize {
        self.x.ncols()
    }

    fn numerical(&self) -> Error {
        Error::Numerical(format!(
            "relaxed objective is not finite at epsilon = {}; use a larger epsilon",
            self.c
        ))
    }

    pub fn value(&self, omega: &[f64]) -> Result<f64> {
        self.evaluate(omega, false).map(|(v, _)| v)
    }

    pub fn value_and_gradient(&self, omega: &[f64]) -> Result<(f64, Vec<f64>)> {
        self.evaluate(omega, true).map(|(v, g)| (v, g.expect("requested")))
    }

    fn evaluate(&self, omega: &[f64], grad: bool) -> Result<(f64, Option<Vec<f64>>)> {
        if omega.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: omega.len(),
            });
        }
        let out = match &self.features {
            None => self.exact(omega, grad),
            Some(block) => self.random_features(block, omega, grad),
        }?;
        if !out.0.is_finite() || out.1.as_ref().is_some_and(|g| g.iter().any(|v| !v.is_finite())) {
            return Err(self.numerical());
        }
        Ok(out)
    }

    fn exact(&self, omega: &[f64], grad: bool) -> Result<(f64, Option<Vec<f64>>)> {
        let (n, d) = self.x.dim();
        let scaled = Array2::from_shape_fn((n, d), |(i, k)| self.x[[i, k]] * omega[k]);
        let k = crate::kernels::gram_matrix(&self.kernel, &scaled).0;
        // H K H
        let col_means = k.mean_axis(Axis(0)).expect("n >= 1");
        let total = col_means.mean().expect("n >= 1");
        let mut g = k.clone();
        for i in 0..n {
            for j in 0..n {
                g[[i, j]] += total - col_means[i] - col_means[j];
            }
            g[[i, i]] += self.c;
        }
        let a = SpdSolver::new(&g).map_err(|_| self.numerical())?.solve(&self.y);
        let value = self.y.dot(&a);
        if !grad {
            return Ok((value, None));
        }
        let z = center(&a);
        // dJ/domega_k = -sum_ij z_i z_j dK_ij/domega_k
        let rho = self.kernel.bandwidth;
        let mut gradient = vec![0.0; d];
        for i in 0..n {
            let xi = row(&scaled, i);
            for j in i + 1..n {
                let w = 2.0 * z[i] * z[j] * k[[i, j]];
                if w == 0.0 {
                    continue;
                }
                let xj = row(&scaled, j);
                match self.kernel.family {
                    KernelFamily::Gaussian | KernelFamily::Anova => {
                        for kk in 0..d {
                            let delta = self.x[[i, kk]] - self.x[[j, kk]];
                            gradient[kk] += w * omega[kk] * delta * delta / (rho * rho);
                        }
                    }
                    KernelFamily::Laplacian => {
                        let r = crate::data::squared_distance(xi, xj).sqrt();
                        if r > 0.0 {
                            for kk in 0..d {
                                let delta = self.x[[i, kk]] - self.x[[j, kk]];
                                gradient[kk] += w * omega[kk] * delta * delta / (rho * r);
                            }
                        }
                    }
                }
            }
        }
        Ok((value, Some(gradient)))
    }

    fn random_features(&self, block: &FrequencyBlock, omega: &[f64], grad: bool) -> Result<(f64, Option<Vec<f64>>)> {
        let (n, d) = self.x.dim();
        let draws = block.draws();
        let scale = 1.0 / (draws as f64).sqrt();
        // Frequencies act on omega * x, i.e. theta = x (omega * xi)^T + b.
        let masked = Array2::from_shape_fn((draws, d), |(j, k)| block.frequencies[[j, k]] * omega[k]);
        let theta = self.x.dot(&masked.t()) + &Array1::from(block.phases.clone());
        let mut v = theta.mapv(|t| std::f64::consts::SQRT_2 * t.cos() * scale);
        let means = v.mean_axis(Axis(0)).expect("n >= 1");
        v -= &means;
        let u = v.t().dot(&self.y);
        let mut s_mat = v.t().dot(&v);
        for j in 0..draws {
            s_mat[[j, j]] += self.c;
        }
        let s = SpdSolver::new(&s_mat).map_err(|_| self.numerical())?.solve(&u);
        let value = (self.y.dot(&self.y) - u.dot(&s)) / self.c;
        if !grad {
            return Ok((value, None));
        }
        // r = y - V s; dJ/dPhi_ij = -(2/c) (H r)_i s_j
        let hr = center(&(&self.y - &v.dot(&s)));
        let mut m = theta;
        for i in 0..n {
            for j in 0..draws {
                m[[i, j]] = hr[i] * s[j] * m[[i, j]].sin();
            }
        }
        let mx = m.dot(&block.frequencies);
        let coef = 2.0 * std::f64::consts::SQRT_2 * scale / self.c;
        let gradient = (0..d)
            .map(|k| coef * (0..n).map(|i| self.x[[i, k]] * mx[[i, k]]).sum::<f64>())
            .collect();
        Ok((value, Some(gradient)))
    }
}

/// Euclidean projection onto `{omega in [0,1]^d : sum omega <= m}`.
///
/// The minimizer is `clamp(v - tau, 0, 1)` with `tau >= 0` the smallest
/// shift meeting the budget; `tau` is found by bisection.
pub fn project_capped_simplex(v: &[f64], m: f64) -> Vec<f64> {
    let clamp = |tau: f64| -> Vec<f64> { v.iter().map(|x| (x - tau).clamp(0.0, 1.0)).collect() };
    let sum = |w: &[f64]| w.iter().sum::<f64>();
    let at_zero = clamp(0.0);
    if sum(&at_zero) <= m {
        return at_zero;
    }
    let mut lo = 0.0;
    let mut hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if sum(&clamp(mid)) > m {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * (1.0 + hi.abs()) {
            break;
        }
    }
    clamp(hi)
}

/// Projected gradient descent with Armijo backtracking on the relaxed
/// problem, started from `omega = (m/d) 1`. The mask keeps the `m_sel`
/// largest relaxed weights (ties to the lower index).
pub fn kernel_feature_select(
    x: &Array2<f64>,
    y: &[i8],
    mode: SelectionKernel,
    cfg: &FeatureSelectConfig,
) -> Result<FeatureMask> {
    let d = x.ncols();
    if cfg.m_sel == 0 || cfg.m_sel > d {
        return Err(Error::invalid(format!("m_sel must lie in 1..={d}")));
    }
    let objective = RelaxedObjective::new(x, y, mode, cfg.epsilon, cfg.seed)?;
    let budget = cfg.m_sel as f64;
    let mut omega = vec![budget / d as f64; d];
    let (mut value, mut grad) = objective.value_and_gradient(&omega)?;
    let initial_objective = value;
    let gmax = grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
    let mut step = if gmax > 0.0 { 0.5 / gmax } else { 1.0 };
    let mut iterations = 0;
    for _ in 0..cfg.steps {
        let mut accepted = None;
        for _ in 0..40 {
            let trial: Vec<f64> = omega.iter().zip(&grad).map(|(w, g)| w - step * g).collect();
            let trial = project_capped_simplex(&trial, budget);
            let decrease: f64 = grad.iter().zip(trial.iter().zip(&omega)).map(|(g, (t, w))| g * (t - w)).sum();
            if decrease >= 0.0 {
                break;
            }
            let v = objective.value(&trial)?;
            if v <= value + 1e-4 * decrease {
                accepted = Some((trial, v));
                break;
            }
            step *= 0.5;
        }
        let Some((next, v)) = accepted else { break };
        let moved = next.iter().zip(&omega).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        omega = next;
        value = v;
        iterations += 1;
        if moved < 1e-10 {
            break;
        }
        grad = objective.value_and_gradient(&omega)?.1;
        step *= 2.0;
    }

    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| omega[b].total_cmp(&omega[a]).then(a.cmp(&b)));
    let mut mask = vec![false; d];
    for &k in &order[..cfg.m_sel] {
        mask[k] = true;
    }
    Ok(FeatureMask {
        mask,
        m_sel: cfg.m_sel,
        relaxed: omega,
        initial_objective,
        final_objective: value,
        iterations,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSelectReport {
    pub schema_version: u32,
    #[serde(flatten)]
    pub result: FeatureMask,
}
