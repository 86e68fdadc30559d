//! Hinge-loss classifiers on random features.
//!
//! The model is `f(x) = beta^T phi^w(x) / sqrt(D) + b0` with
//! `|beta|_2 <= R / sqrt(mD)`, trained by projected stochastic subgradient
//! descent on `(1/n) sum_i [1 - y_i f(x_i)]_+ + (lambda/2) |beta|^2`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write as _};
use std::path::Path;

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::{row, split_by_label, DatasetStats, Label, LabeledDataset};
use crate::error::{Error, Result};
use crate::kernels::{cross_gram, BaseKernel};
use crate::mmd::{mixing_weights, Mixing, MixtureWeights, ScoreOptions, SCHEMA_VERSION};
use crate::rff::{build_feature_matrix, BankSpec, FeatureBank, FeatureMatrix};
use crate::rng;

/// Step size `eta_t` for step `t = 1, 2, ...`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "c")]
pub enum StepSchedule {
    Constant(f64),
    InvSqrt(f64),
    /// `1 / (lambda t)`; needs `lambda > 0`.
    Pegasos,
}

impl StepSchedule {
    pub fn step(&self, t: usize, lambda: f64) -> f64 {
        let t = t as f64;
        match *self {
            StepSchedule::Constant(c) => c,
            StepSchedule::InvSqrt(c) => c / t.sqrt(),
            StepSchedule::Pegasos => 1.0 / (lambda * t),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Ball radius `R`; the coefficient bound is `R / sqrt(mD)`.
    pub radius: f64,
    pub lambda: f64,
    pub epochs: usize,
    /// `None` runs full-batch steps (deterministic, no shuffling).
    pub batch_size: Option<usize>,
    pub schedule: StepSchedule,
    /// Offset step is `offset_step / sqrt(t)`.
    pub offset_step: f64,
    pub fit_offset: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            radius: 100.0,
            lambda: 1.0,
            epochs: 100,
            batch_size: None,
            schedule: StepSchedule::Pegasos,
            offset_step: 1.0,
            fit_offset: true,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.radius > 0.0 && self.radius.is_finite()) {
            return Err(Error::invalid("radius must be positive"));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::invalid("lambda must be nonnegative"));
        }
        if self.epochs == 0 {
            return Err(Error::invalid("epochs must be at least 1"));
        }
        if self.batch_size == Some(0) {
            return Err(Error::invalid("batch size must be at least 1"));
        }
        match self.schedule {
            StepSchedule::Pegasos if self.lambda <= 0.0 => {
                return Err(Error::invalid("the 1/(lambda t) schedule needs lambda > 0"))
            }
            StepSchedule::Constant(c) | StepSchedule::InvSqrt(c) if !(c > 0.0 && c.is_finite()) => {
                return Err(Error::invalid("step constant must be positive"))
            }
            _ => {}
        }
        if !(self.offset_step > 0.0 && self.offset_step.is_finite()) {
            return Err(Error::invalid("offset step must be positive"));
        }
        Ok(())
    }
}

/// Optimizer record kept alongside a trained model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainStats {
    pub epochs: usize,
    pub steps: usize,
    pub seed: u64,
    /// Objective of the averaged iterate after each epoch.
    pub epoch_objectives: Vec<f64>,
    pub final_objective: f64,
    /// Largest `|beta_t|_2` seen after any projection (raw iterates).
    pub max_beta_norm: f64,
    pub beta_bound: f64,
}

/// Linear model on the features of one bank.
#[derive(Debug, Clone, PartialEq)]
pub struct SvmModel {
    pub bank: FeatureBank,
    pub beta: Array1<f64>,
    pub offset: f64,
    pub radius: f64,
    pub lambda: f64,
    /// Applied to raw inputs before the feature map.
    pub standardization: Option<DatasetStats>,
    pub stats: TrainStats,
}

/// `R / sqrt(mD)`.
pub fn beta_bound(radius: f64, n_kernels: usize, draws: usize) -> f64 {
    radius / ((n_kernels * draws) as f64).sqrt()
}

fn hinge(margin: f64) -> f64 {
    (1.0 - margin).max(0.0)
}

fn check_problem(phi: &FeatureMatrix, y: &[Label]) -> Result<()> {
    if phi.nrows() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: phi.nrows(),
            found: y.len(),
        });
    }
    for label in [1, -1] {
        if !y.contains(&label) {
            return Err(Error::ClassTooSmall {
                label,
                found: 0,
                required: 1,
            });
        }
    }
    if phi.values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("feature matrix".into()));
    }
    Ok(())
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| u * v).sum()
}

fn scores<'a>(phi: &'a FeatureMatrix, beta: &'a [f64], offset: f64) -> impl Iterator<Item = f64> + 'a {
    let scale = 1.0 / (phi.draws as f64).sqrt();
    (0..phi.nrows()).map(move |i| scale * dot(phi.row(i), beta) + offset)
}

/// `(1/n) sum_i [1 - y_i f(x_i)]_+ + (lambda/2) |beta|^2`.
pub fn objective(phi: &FeatureMatrix, y: &[Label], beta: &[f64], offset: f64, lambda: f64) -> f64 {
    let n = y.len() as f64;
    let loss: f64 = scores(phi, beta, offset)
        .zip(y)
        .map(|(f, &l)| hinge(f64::from(l) * f))
        .sum();
    loss / n + 0.5 * lambda * dot(beta, beta)
}

/// Subgradient of [`objective`] in `(beta, b0)`; margins exactly at 1 count as inactive.
pub fn subgradient(
    phi: &FeatureMatrix,
    y: &[Label],
    beta: &[f64],
    offset: f64,
    lambda: f64,
) -> (Array1<f64>, f64) {
    let n = y.len() as f64;
    let scale = 1.0 / (phi.draws as f64).sqrt();
    let mut g = Array1::from_iter(beta.iter().map(|b| lambda * b));
    let mut gb = 0.0;
    let gs = g.as_slice_mut().expect("contiguous");
    for (i, f) in scores(phi, beta, offset).enumerate() {
        let yi = f64::from(y[i]);
        if yi * f < 1.0 {
            let c = -yi * scale / n;
            for (gk, p) in gs.iter_mut().zip(phi.row(i)) {
                *gk += c * p;
            }
            gb -= yi / n;
        }
    }
    (g, gb)
}

fn project(beta: &mut [f64], bound: f64) -> f64 {
    let norm = dot(beta, beta).sqrt();
    if norm > bound {
        let s = bound / norm;
        beta.iter_mut().for_each(|b| *b *= s);
        bound
    } else {
        norm
    }
}

/// Projected stochastic subgradient descent. The returned coefficients are a
/// polynomial-decay average of the iterates, which stays inside the ball.
pub fn train(phi: &FeatureMatrix, y: &[Label], cfg: &TrainConfig) -> Result<(Array1<f64>, f64, TrainStats)> {
    cfg.validate()?;
    check_problem(phi, y)?;
    let n = y.len();
    let p = phi.ncols();
    let bound = beta_bound(cfg.radius, phi.n_kernels, phi.draws);
    let scale = 1.0 / (phi.draws as f64).sqrt();
    let batch = cfg.batch_size.unwrap_or(n).min(n);
    let mut rng = rng::stream(cfg.seed, rng::streams::TRAINING);
    let mut order: Vec<usize> = (0..n).collect();

    let mut beta = vec![0.0; p];
    let mut offset = 0.0;
    let mut avg = vec![0.0; p];
    let mut avg_offset = 0.0;
    let mut grad = vec![0.0; p];
    let mut t = 0usize;
    let mut max_norm = 0.0f64;
    let mut epoch_objectives = Vec::with_capacity(cfg.epochs);

    for _ in 0..cfg.epochs {
        if cfg.batch_size.is_some() {
            order.shuffle(&mut rng);
        }
        for chunk in order.chunks(batch) {
            t += 1;
            let eta = cfg.schedule.step(t, cfg.lambda);
            grad.fill(0.0);
            let mut g_off = 0.0;
            for &i in chunk {
                let xi = phi.row(i);
                let yi = f64::from(y[i]);
                if yi * (scale * dot(xi, &beta) + offset) < 1.0 {
                    for (g, v) in grad.iter_mut().zip(xi) {
                        *g += yi * v;
                    }
                    g_off += yi;
                }
            }
            let m = chunk.len() as f64;
            let shrink = 1.0 - eta * cfg.lambda;
            let c = eta * scale / m;
            for (b, g) in beta.iter_mut().zip(&grad) {
                *b = shrink * *b + c * g;
            }
            let norm = project(&mut beta, bound);
            max_norm = max_norm.max(norm);
            debug_assert!(norm <= bound + 1e-9);
            if cfg.fit_offset {
                offset += cfg.offset_step / (t as f64).sqrt() * g_off / m;
            }
            let rho = 4.0 / (t as f64 + 3.0);
            for (a, b) in avg.iter_mut().zip(&beta) {
                *a += rho * (b - *a);
            }
            avg_offset += rho * (offset - avg_offset);
        }
        epoch_objectives.push(objective(phi, y, &avg, avg_offset, cfg.lambda));
    }

    let final_objective = *epoch_objectives.last().expect("epochs >= 1");
    let stats = TrainStats {
        epochs: cfg.epochs,
        steps: t,
        seed: cfg.seed,
        epoch_objectives,
        final_objective,
        max_beta_norm: max_norm,
        beta_bound: bound,
    };
    Ok((Array1::from(avg), avg_offset, stats))
}

impl SvmModel {
    /// Trains on `phi`, which must have been built from `bank`.
    pub fn fit(bank: FeatureBank, phi: &FeatureMatrix, y: &[Label], cfg: &TrainConfig) -> Result<Self> {
        if phi.ncols() != bank.feature_dim() {
            return Err(Error::DimensionMismatch {
                expected: bank.feature_dim(),
                found: phi.ncols(),
            });
        }
        let (beta, offset, stats) = train(phi, y, cfg)?;
        Ok(Self {
            bank,
            beta,
            offset,
            radius: cfg.radius,
            lambda: cfg.lambda,
            standardization: None,
            stats,
        })
    }

    pub fn dim(&self) -> usize {
        self.bank.dim()
    }

    /// `beta^T phi^w(x) / sqrt(D) + b0`.
    pub fn decision_value(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("input point".into()));
        }
        let z;
        let x = match &self.standardization {
            Some(s) => {
                z = s.apply(x);
                &z[..]
            }
            None => x,
        };
        let mut phi = vec![0.0; self.bank.feature_dim()];
        self.bank.features_into(x, &mut phi);
        let beta = self.beta.as_slice().expect("contiguous");
        Ok(dot(&phi, beta) / (self.bank.draws() as f64).sqrt() + self.offset)
    }

    /// Decision values for every row, computed through one feature matrix.
    pub fn decision_values(&self, x: &Array2<f64>) -> Result<Vec<f64>> {
        let xs;
        let x = match &self.standardization {
            Some(s) => {
                xs = Array2::from_shape_fn(x.dim(), |(i, j)| s.apply(row(x, i))[j]);
                &xs
            }
            None => x,
        };
        let phi = build_feature_matrix(x, &self.bank)?;
        let beta = self.beta.as_slice().expect("contiguous");
        Ok(scores(&phi, beta, self.offset).collect())
    }

    /// Sign of the decision value; 0 maps to +1.
    pub fn predict(&self, x: &[f64]) -> Result<Label> {
        Ok(sign(self.decision_value(x)?))
    }

    /// Logistic of the decision value.
    pub fn soft_output(&self, x: &[f64]) -> Result<f64> {
        Ok(logistic(self.decision_value(x)?))
    }

    pub fn evaluate(&self, ds: &LabeledDataset) -> Result<Metrics> {
        if ds.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: ds.dim(),
            });
        }
        Ok(Metrics::from_decisions(&self.decision_values(ds.features())?, ds.labels()))
    }

    pub fn to_file(&self) -> ModelFile {
        ModelFile {
            schema_version: SCHEMA_VERSION,
            bank: self.bank.spec().clone(),
            radius: self.radius,
            lambda: self.lambda,
            beta: self.beta.to_vec(),
            offset: self.offset,
            standardization: self.standardization.clone(),
            training: self.stats.clone(),
            checksum: self.bank.checksum(),
        }
    }

    pub fn from_file(file: ModelFile) -> Result<Self> {
        if file.schema_version != SCHEMA_VERSION {
            return Err(Error::Integrity(format!("unknown schema version {}", file.schema_version)));
        }
        let bank = FeatureBank::generate(file.bank).map_err(|e| Error::Integrity(e.to_string()))?;
        if bank.checksum() != file.checksum {
            return Err(Error::Integrity("regenerated frequencies do not match the checksum".into()));
        }
        if file.beta.len() != bank.feature_dim() {
            return Err(Error::Integrity(format!(
                "beta has {} entries, bank needs {}",
                file.beta.len(),
                bank.feature_dim()
            )));
        }
        if let Some(s) = &file.standardization {
            if s.per_feature_mean.len() != bank.dim() || s.per_feature_std.len() != bank.dim() {
                return Err(Error::Integrity("standardization has the wrong dimension".into()));
            }
        }
        if file.beta.iter().chain([&file.offset]).any(|v| !v.is_finite()) {
            return Err(Error::Integrity("non-finite coefficient".into()));
        }
        Ok(Self {
            bank,
            beta: Array1::from(file.beta),
            offset: file.offset,
            radius: file.radius,
            lambda: file.lambda,
            standardization: file.standardization,
            stats: file.training,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(f);
        serde_json::to_writer_pretty(&mut w, &self.to_file())?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// Any parse or consistency failure is reported as [`Error::Integrity`].
    pub fn load(path: &Path) -> Result<Self> {
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        let file: ModelFile =
            serde_json::from_reader(BufReader::new(f)).map_err(|e| Error::Integrity(e.to_string()))?;
        Self::from_file(file)
    }
}

/// On-disk model. Frequencies are regenerated from `bank.seed` and checked
/// against `checksum`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub schema_version: u32,
    pub bank: BankSpec,
    pub radius: f64,
    pub lambda: f64,
    pub beta: Vec<f64>,
    pub offset: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub standardization: Option<DatasetStats>,
    pub training: TrainStats,
    pub checksum: String,
}

pub fn sign(f: f64) -> Label {
    if f >= 0.0 {
        1
    } else {
        -1
    }
}

/// `e^f / (1 + e^f)`, kept inside `[1e-15, 1 - 1e-15]`.
pub fn logistic(f: f64) -> f64 {
    let p = if f >= 0.0 {
        1.0 / (1.0 + (-f).exp())
    } else {
        let e = f.exp();
        e / (1.0 + e)
    };
    p.clamp(1e-15, 1.0 - 1e-15)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Confusion {
    pub true_positive: usize,
    pub false_positive: usize,
    pub true_negative: usize,
    pub false_negative: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub hinge_loss: f64,
    pub confusion: Confusion,
}

impl Metrics {
    pub fn from_decisions(f: &[f64], y: &[Label]) -> Self {
        let mut c = Confusion::default();
        let mut loss = 0.0;
        for (&fi, &yi) in f.iter().zip(y) {
            loss += hinge(f64::from(yi) * fi);
            match (sign(fi), yi) {
                (1, 1) => c.true_positive += 1,
                (1, _) => c.false_positive += 1,
                (_, 1) => c.false_negative += 1,
                _ => c.true_negative += 1,
            }
        }
        let n = y.len();
        let correct = c.true_positive + c.true_negative;
        Self {
            accuracy: if n == 0 { 0.0 } else { correct as f64 / n as f64 },
            hinge_loss: if n == 0 { 0.0 } else { loss / n as f64 },
            confusion: c,
        }
    }

    pub fn error_rate(&self) -> f64 {
        1.0 - self.accuracy
    }
}

/// Kernel scores, mixture weights and the trained model.
#[derive(Debug, Clone)]
pub struct MixtureFit {
    pub mixing: Mixing,
    pub model: SvmModel,
}

/// Scores every kernel by MMD between the classes, mixes them with the
/// normalized scores, draws `draws` frequencies per kernel and trains the
/// hinge-loss model. `cfg.seed` drives both the bank and the optimizer.
pub fn fit_mixture(
    ds: &LabeledDataset,
    kernels: &[BaseKernel],
    draws: usize,
    cfg: &TrainConfig,
    opts: &ScoreOptions,
) -> Result<MixtureFit> {
    cfg.validate()?;
    let split = split_by_label(ds)?;
    let mixing = mixing_weights(kernels, &split, opts)?;
    let model = fit_weighted(ds, kernels, mixing.weights.clone(), draws, cfg)?;
    Ok(MixtureFit { mixing, model })
}

/// Trains on a bank with fixed weights (no scoring).
pub fn fit_weighted(
    ds: &LabeledDataset,
    kernels: &[BaseKernel],
    weights: MixtureWeights,
    draws: usize,
    cfg: &TrainConfig,
) -> Result<SvmModel> {
    let bank = FeatureBank::new(kernels.to_vec(), weights, draws, ds.dim(), cfg.seed)?;
    let phi = build_feature_matrix(ds.features(), &bank)?;
    SvmModel::fit(bank, &phi, ds.labels(), cfg)
}

/// Reference classifier trained on the exact mixture Gram matrix by
/// full-batch functional subgradient steps. Only for small `n`.
#[derive(Debug, Clone)]
pub struct ExactSvm {
    pub kernels: Vec<BaseKernel>,
    pub weights: MixtureWeights,
    pub support: Array2<f64>,
    pub alpha: Array1<f64>,
    pub offset: f64,
}

/// Runs the same recursion as full-batch [`train`] with `R = inf`, with
/// `f = sum_i alpha_i k^w(x_i, .)` in place of the random-feature model.
pub fn train_exact(
    ds: &LabeledDataset,
    kernels: &[BaseKernel],
    weights: &MixtureWeights,
    cfg: &TrainConfig,
) -> Result<ExactSvm> {
    cfg.validate()?;
    let n = ds.len();
    let x = ds.features();
    let k = weighted_cross_gram(kernels, weights, x, x)?;
    let y = ds.labels_f64();
    let mut alpha = Array1::<f64>::zeros(n);
    let mut offset = 0.0;
    let mut avg = Array1::<f64>::zeros(n);
    let mut avg_offset = 0.0;
    let steps = cfg.epochs;
    for t in 1..=steps {
        let eta = cfg.schedule.step(t, cfg.lambda);
        let f = k.dot(&alpha);
        let shrink = 1.0 - eta * cfg.lambda;
        let mut g_off = 0.0;
        let active: Vec<bool> = (0..n).map(|i| y[i] * (f[i] + offset) < 1.0).collect();
        for i in 0..n {
            alpha[i] *= shrink;
            if active[i] {
                alpha[i] += eta * y[i] / n as f64;
                g_off += y[i];
            }
        }
        if cfg.fit_offset {
            offset += cfg.offset_step / (t as f64).sqrt() * g_off / n as f64;
        }
        let rho = 4.0 / (t as f64 + 3.0);
        avg.zip_mut_with(&alpha, |a, b| *a += rho * (b - *a));
        avg_offset += rho * (offset - avg_offset);
    }
    Ok(ExactSvm {
        kernels: kernels.to_vec(),
        weights: weights.clone(),
        support: x.clone(),
        alpha: avg,
        offset: avg_offset,
    })
}

fn weighted_cross_gram(
    kernels: &[BaseKernel],
    w: &MixtureWeights,
    a: &Array2<f64>,
    b: &Array2<f64>,
) -> Result<Array2<f64>> {
    if kernels.len() != w.len() {
        return Err(Error::DimensionMismatch {
            expected: kernels.len(),
            found: w.len(),
        });
    }
    let mut k = Array2::zeros((a.nrows(), b.nrows()));
    for (kern, &wl) in kernels.iter().zip(w.as_slice()) {
        if wl > 0.0 {
            k.scaled_add(wl, &cross_gram(kern, a, b));
        }
    }
    Ok(k)
}

impl ExactSvm {
    pub fn decision_values(&self, x: &Array2<f64>) -> Result<Vec<f64>> {
        let k = weighted_cross_gram(&self.kernels, &self.weights, x, &self.support)?;
        Ok(k.dot(&self.alpha).iter().map(|v| v + self.offset).collect())
    }

    pub fn evaluate(&self, ds: &LabeledDataset) -> Result<Metrics> {
        Ok(Metrics::from_decisions(&self.decision_values(ds.features())?, ds.labels()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::two_gaussians;
    use ndarray::array;

    fn toy_bank(d: usize, draws: usize) -> FeatureBank {
        FeatureBank::new(
            vec![BaseKernel::gaussian(1.0).unwrap(), BaseKernel::gaussian(3.0).unwrap()],
            MixtureWeights::new(vec![0.5, 0.5]).unwrap(),
            draws,
            d,
            11,
        )
        .unwrap()
    }

    fn raw_model(beta: Vec<f64>, offset: f64) -> SvmModel {
        let bank = toy_bank(2, beta.len() / 2);
        SvmModel {
            bank,
            beta: Array1::from(beta),
            offset,
            radius: 1.0,
            lambda: 1.0,
            standardization: None,
            stats: TrainStats {
                epochs: 0,
                steps: 0,
                seed: 0,
                epoch_objectives: vec![],
                final_objective: 0.0,
                max_beta_norm: 0.0,
                beta_bound: 1.0,
            },
        }
    }

    #[test]
    fn zero_beta_gives_offset() {
        let m = raw_model(vec![0.0; 8], -0.25);
        assert_eq!(m.decision_value(&[3.0, -1.0]).unwrap(), -0.25);
        assert_eq!(m.predict(&[3.0, -1.0]).unwrap(), -1);
        assert!(m.decision_value(&[1.0]).is_err());
    }

    #[test]
    fn tie_and_logistic() {
        assert_eq!(sign(0.0), 1);
        assert_eq!(sign(-0.0), 1);
        assert_eq!(logistic(0.0), 0.5);
        assert_eq!(logistic(1e6), 1.0 - 1e-15);
        let grid: Vec<f64> = (-50..=50).map(|i| logistic(i as f64 * 0.5)).collect();
        assert!(grid.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn flipped_model_flips_predictions() {
        let beta: Vec<f64> = (0..8).map(|i| (i as f64 - 3.5) * 0.1).collect();
        let m = raw_model(beta.clone(), 0.05);
        let neg = raw_model(beta.iter().map(|b| -b).collect(), -0.05);
        for i in 0..20 {
            let x = [i as f64 * 0.1 - 1.0, 0.3];
            let f = m.decision_value(&x).unwrap();
            assert!((f + neg.decision_value(&x).unwrap()).abs() < 1e-12);
            if f != 0.0 {
                assert_eq!(m.predict(&x).unwrap(), -neg.predict(&x).unwrap());
            }
        }
    }

    #[test]
    fn decision_bound() {
        let bank = toy_bank(2, 16);
        let bound = beta_bound(5.0, 2, 16);
        let beta = Array1::from_elem(32, bound / (32f64).sqrt());
        let m = SvmModel { beta, radius: 5.0, ..raw_model(vec![0.0; 32], 0.1) };
        let m = SvmModel { bank, ..m };
        let limit = 5.0 * 2f64.sqrt() * 0.5f64.sqrt() + 0.1;
        for i in 0..20 {
            let x = [i as f64 * 0.37 - 2.0, 1.0 - i as f64 * 0.2];
            assert!(m.decision_value(&x).unwrap().abs() <= limit + 1e-12);
        }
    }

    #[test]
    fn separable_one_dimensional() {
        let x = Array2::from_shape_fn((40, 1), |(i, _)| if i % 2 == 0 { 1.0 + i as f64 * 0.05 } else { -1.0 - i as f64 * 0.05 });
        let y: Vec<Label> = (0..40).map(|i| if i % 2 == 0 { 1 } else { -1 }).collect();
        let phi = FeatureMatrix::from_raw(x, 1, 1).unwrap();
        let cfg = TrainConfig { lambda: 1e-3, epochs: 50, ..TrainConfig::default() };
        let (beta, b0, stats) = train(&phi, &y, &cfg).unwrap();
        let acc = Metrics::from_decisions(&scores(&phi, beta.as_slice().unwrap(), b0).collect::<Vec<_>>(), &y).accuracy;
        assert_eq!(acc, 1.0);
        assert!(stats.max_beta_norm <= stats.beta_bound + 1e-9);
    }

    #[test]
    fn heavy_regularization_shrinks_beta() {
        let ds = two_gaussians(60, 2, 1.0, 3).unwrap();
        let bank = toy_bank(2, 16);
        let phi = build_feature_matrix(ds.features(), &bank).unwrap();
        let cfg = TrainConfig { lambda: 1e6, ..TrainConfig::default() };
        let (beta, _, _) = train(&phi, ds.labels(), &cfg).unwrap();
        assert!(beta.dot(&beta).sqrt() <= 1e-2);
    }

    #[test]
    fn tiny_radius_predicts_majority() {
        let ds = two_gaussians(60, 2, 1.0, 3).unwrap();
        let keep: Vec<usize> = (0..60).filter(|i| i % 2 == 0 || *i < 20).collect();
        let ds = ds.subset(&keep);
        let bank = toy_bank(2, 16);
        let phi = build_feature_matrix(ds.features(), &bank).unwrap();
        let cfg = TrainConfig { radius: 1e-9, epochs: 20, ..TrainConfig::default() };
        let m = SvmModel::fit(bank, &phi, ds.labels(), &cfg).unwrap();
        for i in 0..ds.len() {
            assert_eq!(m.predict(ds.row(i)).unwrap(), 1);
        }
    }

    #[test]
    fn rejects_bad_input() {
        let phi = FeatureMatrix::from_raw(array![[1.0], [2.0]], 1, 1).unwrap();
        assert!(matches!(train(&phi, &[1, 1], &TrainConfig::default()), Err(Error::ClassTooSmall { .. })));
        assert!(train(&phi, &[1], &TrainConfig::default()).is_err());
        let bad = FeatureMatrix { values: array![[f64::NAN], [1.0]], draws: 1, n_kernels: 1 };
        assert!(matches!(train(&bad, &[1, -1], &TrainConfig::default()), Err(Error::NonFinite(_))));
        let cfg = TrainConfig { epochs: 0, ..TrainConfig::default() };
        assert!(train(&phi, &[1, -1], &cfg).is_err());
    }

    #[test]
    fn decision_matches_feature_rows() {
        let ds = two_gaussians(30, 2, 1.0, 1).unwrap();
        let cfg = TrainConfig { epochs: 5, ..TrainConfig::default() };
        let m = fit_weighted(&ds, &[BaseKernel::gaussian(1.0).unwrap()], MixtureWeights::uniform(1), 32, &cfg).unwrap();
        let phi = build_feature_matrix(ds.features(), &m.bank).unwrap();
        let batch = m.decision_values(ds.features()).unwrap();
        for i in 0..ds.len() {
            let f = phi.row(i).iter().zip(m.beta.iter()).map(|(a, b)| a * b).sum::<f64>() / (32f64).sqrt() + m.offset;
            assert!((m.decision_value(ds.row(i)).unwrap() - f).abs() < 1e-12);
            assert!((batch[i] - f).abs() < 1e-12);
        }
    }

    #[test]
    fn model_round_trip_and_checksum() {
        let ds = two_gaussians(40, 3, 1.0, 2).unwrap();
        let fit = fit_mixture(
            &ds,
            &[BaseKernel::gaussian(1.0).unwrap(), BaseKernel::laplacian(2.0).unwrap()],
            16,
            &TrainConfig { epochs: 3, ..TrainConfig::default() },
            &ScoreOptions::default(),
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        fit.model.save(&path).unwrap();
        let back = SvmModel::load(&path).unwrap();
        assert_eq!(back, fit.model);

        let mut file = fit.model.to_file();
        file.checksum = "00".into();
        assert!(matches!(SvmModel::from_file(file), Err(Error::Integrity(_))));
        let mut file = fit.model.to_file();
        file.beta.pop();
        assert!(matches!(SvmModel::from_file(file), Err(Error::Integrity(_))));
        std::fs::write(&path, "{\"schema_version\": 1,").unwrap();
        assert!(matches!(SvmModel::load(&path), Err(Error::Integrity(_))));
    }

    #[test]
    fn metrics_counts() {
        let m = Metrics::from_decisions(&[1.0, 1.0, 1.0, 1.0], &[1, -1, 1, -1]);
        assert_eq!(m.accuracy, 0.5);
        assert_eq!(m.confusion.false_positive, 2);
        assert!((m.accuracy + m.error_rate() - 1.0).abs() < 1e-15);
        assert_eq!(Metrics::from_decisions(&[2.0, -3.0], &[1, -1]).accuracy, 1.0);
    }

    #[test]
    fn full_batch_duplicate_rows() {
        let ds = two_gaussians(30, 2, 0.7, 5).unwrap();
        let cfg = TrainConfig { batch_size: None, epochs: 200, ..TrainConfig::default() };
        let k = [BaseKernel::gaussian(1.0).unwrap()];
        let a = fit_weighted(&ds, &k, MixtureWeights::uniform(1), 64, &cfg).unwrap();
        let twice = ds.concat(&ds).unwrap();
        let b = fit_weighted(&twice, &k, MixtureWeights::uniform(1), 64, &cfg).unwrap();
        for i in 0..ds.len() {
            let (fa, fb) = (a.decision_value(ds.row(i)).unwrap(), b.decision_value(ds.row(i)).unwrap());
            assert!((fa - fb).abs() < 1e-6);
        }
    }
}
