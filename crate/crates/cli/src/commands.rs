use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use kernelmix::data::{self, split_by_label, standardize, DatasetStats};
use kernelmix::diagnostics::{
    complexity_bounds, frobenius_concentration, pointwise_report, spectral_concentration, ComplexityReport,
    ConcentrationReport, PointwiseReport, SPECTRAL_ROW_LIMIT,
};
use kernelmix::mmd::{mixing_weights, ScoreOptions, ScoreReport, SCHEMA_VERSION};
use kernelmix::rff::build_feature_matrix;
use kernelmix::select::{
    compare_selection, kernel_feature_select, FeatureSelectConfig, FeatureSelectReport, SelectConfig, SelectionKernel,
};
use kernelmix::svm::{fit_mixture, logistic, sign, Confusion, Metrics, TrainConfig};
use kernelmix::{rng, synthetic, BaseKernel, DataFormat, FeatureBank, LabeledDataset, SvmModel};
use serde::Serialize;

use crate::config::{
    positive, positive_count, DataParams, DiagnoseParams, FeatureParams, KernelParams, Preset, SelectParams,
    TrainParams,
};
use crate::{ConfigError, InvariantViolation};

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// Headers are written explicitly so that empty tables still carry them.
fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)
        .with_context(|| format!("writing {}", path.display()))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn guess_format(path: &Path) -> DataFormat {
    match path.extension().and_then(|e| e.to_str()) {
        Some("svm" | "libsvm" | "svmlight") => DataFormat::Libsvm,
        _ => DataFormat::Csv,
    }
}

fn synthesize(preset: Preset, n: usize, d: usize, separation: f64, seed: u64) -> Result<LabeledDataset> {
    positive_count("n", n)?;
    positive_count("d", d)?;
    let ds = match preset {
        Preset::TwoGaussians => synthetic::two_gaussians(n, d, separation, seed),
        Preset::PlantedFeature => synthetic::planted_feature(n, d, seed),
        Preset::IdenticalClasses => synthetic::identical_classes(n.div_ceil(2), d, seed),
    };
    ds.map_err(|e| ConfigError(e.to_string()).into())
}

/// Loads or generates the dataset and optionally standardizes it.
fn load(p: &DataParams, seed: u64) -> Result<(LabeledDataset, Option<DatasetStats>)> {
    let ds = match (&p.path, p.preset) {
        (Some(path), _) => {
            let format = p.format.unwrap_or_else(|| guess_format(path));
            data::load_dataset(path, format, p.n_features)?
        }
        (None, Some(preset)) => synthesize(
            preset,
            p.n.unwrap_or(400),
            p.d.unwrap_or(5),
            p.separation.unwrap_or(2.0),
            seed,
        )?,
        (None, None) => return Err(ConfigError("no input: pass --data or --preset".into()).into()),
    };
    if ds.is_single_class() {
        eprintln!("warning: dataset has a single class");
    }
    if p.standardize.unwrap_or(false) {
        let (z, stats) = standardize(&ds)?;
        Ok((z, Some(stats)))
    } else {
        Ok((ds, None))
    }
}

fn score_options(k: &KernelParams) -> ScoreOptions {
    if k.biased.unwrap_or(false) {
        ScoreOptions::biased()
    } else {
        ScoreOptions::default()
    }
}

pub fn generate(preset: Preset, n: usize, d: usize, separation: f64, seed: u64, output: &Path) -> Result<()> {
    let ds = synthesize(preset, n, d, separation, seed)?;
    let f = fs::File::create(output).with_context(|| format!("writing {}", output.display()))?;
    data::write_csv(&ds, f)?;
    Ok(())
}

pub fn score(data: &DataParams, kernels: &KernelParams, seed: u64, out_dir: &Path) -> Result<()> {
    let bank = kernels.kernels()?;
    let (ds, _) = load(data, seed)?;
    let mixing = mixing_weights(&bank, &split_by_label(&ds)?, &score_options(kernels))?;
    let report = ScoreReport::new(&bank, &mixing);
    create_dir(out_dir)?;
    write_json(&out_dir.join("scores.json"), &report)?;
    report.write_csv(fs::File::create(out_dir.join("scores.csv"))?)?;
    if report.degenerate {
        eprintln!("all scores are zero; weights fell back to uniform");
    }
    Ok(())
}

#[derive(Serialize)]
struct TrainReport {
    schema_version: u32,
    n: usize,
    dim: usize,
    draws: usize,
    config: TrainConfig,
    scores: ScoreReport,
    train_accuracy: f64,
    train_hinge_loss: f64,
    confusion: Confusion,
    final_objective: f64,
    max_beta_norm: f64,
    beta_bound: f64,
    checksum: String,
}

pub fn train(
    data: &DataParams,
    kernels: &KernelParams,
    train: &TrainParams,
    seed: u64,
    out_dir: &Path,
) -> Result<()> {
    let bank = kernels.kernels()?;
    let draws = kernels.draws()?;
    let cfg = train.config(seed)?;
    let (ds, stats) = load(data, seed)?;
    let fit = fit_mixture(&ds, &bank, draws, &cfg, &score_options(kernels))?;
    let mut model = fit.model;
    let metrics = model.evaluate(&ds)?;
    model.standardization = stats;

    create_dir(out_dir)?;
    model.save(&out_dir.join("model.json"))?;
    let mut log = csv_writer(&out_dir.join("train_log.csv"))?;
    log.write_record(["epoch", "objective"])?;
    for (e, obj) in model.stats.epoch_objectives.iter().enumerate() {
        log.serialize((e + 1, obj))?;
    }
    log.flush()?;
    let report = TrainReport {
        schema_version: SCHEMA_VERSION,
        n: ds.len(),
        dim: ds.dim(),
        draws,
        config: cfg,
        scores: ScoreReport::new(&bank, &fit.mixing),
        train_accuracy: metrics.accuracy,
        train_hinge_loss: metrics.hinge_loss,
        confusion: metrics.confusion,
        final_objective: model.stats.final_objective,
        max_beta_norm: model.stats.max_beta_norm,
        beta_bound: model.stats.beta_bound,
        checksum: model.bank.checksum(),
    };
    write_json(&out_dir.join("train_report.json"), &report)?;
    eprintln!("train accuracy {:.4}", metrics.accuracy);
    Ok(())
}

#[derive(Serialize)]
struct PredictionRow {
    index: usize,
    decision_value: f64,
    soft_output: f64,
    label: i8,
}

pub fn predict(model_path: &Path, data_path: &Path, format: DataFormat, output: &Path) -> Result<()> {
    let model = SvmModel::load(model_path)?;
    let text = fs::read_to_string(data_path).map_err(|source| kernelmix::Error::Io {
        path: data_path.to_path_buf(),
        source,
    })?;
    let ds = if text.trim().is_empty() {
        None
    } else {
        Some(data::load_dataset(data_path, format, Some(model.dim()))?)
    };
    let decisions = match &ds {
        Some(ds) if !ds.is_empty() => model.decision_values(ds.features())?,
        _ => Vec::new(),
    };
    let mut w = csv_writer(output)?;
    w.write_record(["index", "decision_value", "soft_output", "label"])?;
    for (index, &f) in decisions.iter().enumerate() {
        w.serialize(PredictionRow {
            index,
            decision_value: f,
            soft_output: logistic(f),
            label: sign(f),
        })?;
    }
    w.flush()?;
    if let Some(ds) = ds.filter(|d| !d.is_empty()) {
        eprintln!("accuracy {:.4}", Metrics::from_decisions(&decisions, ds.labels()).accuracy);
    }
    Ok(())
}

pub fn select(
    data: &DataParams,
    kernels: &KernelParams,
    train: &TrainParams,
    select: &SelectParams,
    seed: u64,
    out_dir: &Path,
) -> Result<()> {
    let grid = select.grid()?;
    let defaults = SelectConfig::default();
    let cfg = SelectConfig {
        folds: select.folds.unwrap_or(defaults.folds),
        draws: kernels.draws()?,
        train: train.config(seed)?,
        score: score_options(kernels),
        test_fraction: select.test_fraction.unwrap_or(defaults.test_fraction),
    };
    if cfg.folds < 2 {
        return Err(ConfigError("folds must be at least 2".into()).into());
    }
    if !(0.0..1.0).contains(&cfg.test_fraction) {
        return Err(ConfigError("test fraction must lie in [0, 1)".into()).into());
    }
    let (ds, _) = load(data, seed)?;
    let report = compare_selection(&ds, &grid, &cfg, seed)?;
    create_dir(out_dir)?;
    write_json(&out_dir.join("selection.json"), &report)?;
    report.write_csv(fs::File::create(out_dir.join("selection.csv"))?)?;
    eprintln!(
        "cv gamma {:e} ({:.2}s), mmd gamma {:e} ({:.3}s), mixture test accuracy {:.4}",
        report.cv_best_gamma, report.cv_seconds, report.mmd_best_gamma, report.mmd_seconds, report.test_accuracy_mixture
    );
    Ok(())
}

pub fn features(
    data: &DataParams,
    kernels: &KernelParams,
    params: &FeatureParams,
    seed: u64,
    out_dir: &Path,
) -> Result<()> {
    let bank = kernels.kernels()?;
    let [kernel] = bank[..] else {
        return Err(ConfigError(format!("feature selection takes one kernel, got {}", bank.len())).into());
    };
    let mode = if params.exact.unwrap_or(false) {
        SelectionKernel::Exact { kernel }
    } else {
        SelectionKernel::RandomFeatures {
            kernel,
            draws: kernels.draws()?,
        }
    };
    let defaults = FeatureSelectConfig::default();
    let cfg = FeatureSelectConfig {
        m_sel: positive_count("m_sel", params.m_sel.unwrap_or(defaults.m_sel))?,
        epsilon: positive("epsilon", params.epsilon.unwrap_or(defaults.epsilon))?,
        steps: params.steps.unwrap_or(defaults.steps),
        seed,
    };
    let (ds, _) = load(data, seed)?;
    let result = kernel_feature_select(ds.features(), ds.labels(), mode, &cfg)?;
    eprintln!("selected features {:?}", result.selected());
    create_dir(out_dir)?;
    write_json(
        &out_dir.join("features.json"),
        &FeatureSelectReport {
            schema_version: SCHEMA_VERSION,
            result,
        },
    )
}

#[derive(Serialize)]
struct PointwiseEntry {
    kernel: BaseKernel,
    report: Option<PointwiseReport>,
    note: Option<String>,
}

#[derive(Serialize)]
struct DiagnosticsReport {
    schema_version: u32,
    weights: Vec<f64>,
    complexity: Vec<ComplexityReport>,
    concentration: Vec<ConcentrationReport>,
    pointwise: Vec<PointwiseEntry>,
}

pub fn diagnose(
    data: &DataParams,
    kernels: &KernelParams,
    train: &TrainParams,
    params: &DiagnoseParams,
    seed: u64,
    out_dir: &Path,
) -> Result<()> {
    let bank = kernels.kernels()?;
    let sweep = match &params.draws_sweep {
        Some(s) if !s.is_empty() => s.clone(),
        _ => vec![kernels.draws()?],
    };
    for &d in &sweep {
        positive_count("draws", d)?;
    }
    let radius = positive("radius", train.radius.unwrap_or(TrainConfig::default().radius))?;
    let n_seeds = positive_count("conc_seeds", params.conc_seeds.unwrap_or(10))?;
    let eps = positive("eps", params.eps.unwrap_or(0.1))?;
    let delta = positive("delta", params.delta.unwrap_or(0.05))?;
    let seeds: Vec<u64> = (0..n_seeds as u64).map(|i| rng::derive_seed(seed, i)).collect();

    let (ds, _) = load(data, seed)?;
    let weights = mixing_weights(&bank, &split_by_label(&ds)?, &score_options(kernels))?.weights;
    let x = ds.features();

    let mut complexity = Vec::new();
    let mut concentration = Vec::new();
    for &draws in &sweep {
        let fb = FeatureBank::new(bank.clone(), weights.clone(), draws, ds.dim(), seed)?;
        complexity.push(complexity_bounds(&build_feature_matrix(x, &fb)?, radius)?);
        concentration.push(frobenius_concentration(x, &bank, &weights, draws, &seeds)?);
        if ds.len() <= SPECTRAL_ROW_LIMIT {
            concentration.push(spectral_concentration(x, &bank, &weights, draws, &seeds)?);
        }
    }

    let diam = data::diameter(&ds).value;
    let top = *sweep.iter().max().expect("non-empty sweep");
    let pointwise = bank
        .iter()
        .map(|k| match pointwise_report(k, eps, top, ds.dim(), diam, delta) {
            Ok(r) => Ok(PointwiseEntry { kernel: *k, report: Some(r), note: None }),
            Err(kernelmix::Error::Unsupported(msg)) => Ok(PointwiseEntry { kernel: *k, report: None, note: Some(msg) }),
            Err(e) => Err(e),
        })
        .collect::<kernelmix::Result<Vec<_>>>()?;

    create_dir(out_dir)?;
    let mut w = csv::Writer::from_path(out_dir.join("complexity.csv"))?;
    for r in &complexity {
        w.serialize(r)?;
    }
    w.flush()?;
    ConcentrationReport::write_csv(&concentration, fs::File::create(out_dir.join("concentration.csv"))?)?;
    let violations: Vec<usize> = complexity.iter().filter(|r| !r.ordering_holds()).map(|r| r.draws).collect();
    write_json(
        &out_dir.join("diagnostics.json"),
        &DiagnosticsReport {
            schema_version: SCHEMA_VERSION,
            weights: weights.as_slice().to_vec(),
            complexity,
            concentration,
            pointwise,
        },
    )?;
    if !violations.is_empty() {
        return Err(InvariantViolation(format!("erfc bound exceeds the Khintchine bound at D = {violations:?}")).into());
    }
    Ok(())
}
