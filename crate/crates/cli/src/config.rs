//! Run configuration: command-line flags layered over an optional TOML file.
//!
//! The file mirrors the flag groups as tables:
//!
//! ```toml
//! seed = 7
//!
//! [data]
//! path = "train.csv"
//! standardize = true
//!
//! [kernels]
//! specs = ["gaussian:0.5,1,2", "laplacian:gamma=0.1"]
//! draws = 512
//!
//! [train]
//! radius = 100.0
//! lambda = 1.0
//! epochs = 100
//! schedule = "pegasos"
//! ```

use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, ValueEnum};
use kernelmix::select::BandwidthGrid;
use kernelmix::svm::{StepSchedule, TrainConfig};
use kernelmix::{BaseKernel, DataFormat, KernelFamily};
use serde::Deserialize;

use crate::ConfigError;

type Result<T> = std::result::Result<T, ConfigError>;

macro_rules! overlay {
    ($name:ident { $($field:ident),* $(,)? }) => {
        impl $name {
            /// Fields set in `self` win over those in `base`.
            pub fn overlay(self, base: Self) -> Self {
                Self { $($field: self.$field.or(base.$field)),* }
            }
        }
    };
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    /// Classes N(+s 1, I) and N(-s 1, I), rows interleaved.
    TwoGaussians,
    /// x ~ N(0, I), label = sign(x_1).
    PlantedFeature,
    /// Both classes hold the same points.
    IdenticalClasses,
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataParams {
    /// Input dataset (CSV with a `label` column, or LIBSVM).
    #[arg(long = "data")]
    pub path: Option<PathBuf>,
    #[arg(long, value_parser = parse_format)]
    #[serde(default, deserialize_with = "de_format")]
    pub format: Option<DataFormat>,
    /// Feature count for LIBSVM input.
    #[arg(long)]
    pub n_features: Option<usize>,
    /// Generate a synthetic dataset instead of reading one.
    #[arg(long, conflicts_with = "path")]
    pub preset: Option<Preset>,
    /// Rows for the synthetic preset.
    #[arg(long)]
    pub n: Option<usize>,
    /// Dimension for the synthetic preset.
    #[arg(long)]
    pub d: Option<usize>,
    /// Class-mean offset for the two-gaussians preset.
    #[arg(long)]
    pub separation: Option<f64>,
    /// Standardize features (population std) before fitting.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub standardize: Option<bool>,
}

overlay!(DataParams { path, format, n_features, preset, n, d, separation, standardize });

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelParams {
    /// Base kernels: `family:rho1,rho2,...` or `family:gamma=g1,g2,...`.
    /// Families: gaussian, laplacian, anova. Repeatable.
    #[arg(long = "kernel")]
    pub specs: Option<Vec<String>>,
    /// Random features per kernel (D).
    #[arg(long)]
    pub draws: Option<usize>,
    /// Score every kernel with the biased estimator even on balanced classes.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub biased: Option<bool>,
}

overlay!(KernelParams { specs, draws, biased });

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainParams {
    /// Ball radius R; coefficients satisfy |beta| <= R / sqrt(mD).
    #[arg(long)]
    pub radius: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Mini-batch size; omit for full-batch steps.
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// `pegasos`, `constant:C` or `inv-sqrt:C`.
    #[arg(long)]
    pub schedule: Option<String>,
    #[arg(long)]
    pub offset_step: Option<f64>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub no_offset: Option<bool>,
}

overlay!(TrainParams { radius, lambda, epochs, batch_size, schedule, offset_step, no_offset });

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelectParams {
    /// Explicit gamma grid, comma separated.
    #[arg(long, value_delimiter = ',', conflicts_with = "grid_range")]
    pub grid: Option<Vec<f64>>,
    /// Log-spaced gamma grid `lo:hi:count`.
    #[arg(long)]
    pub grid_range: Option<String>,
    #[arg(long)]
    pub folds: Option<usize>,
    #[arg(long)]
    pub test_fraction: Option<f64>,
}

overlay!(SelectParams { grid, grid_range, folds, test_fraction });

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnoseParams {
    /// One complexity row per listed D (comma separated).
    #[arg(long, value_delimiter = ',')]
    pub draws_sweep: Option<Vec<usize>>,
    /// Seeds per D for the concentration tables.
    #[arg(long)]
    pub conc_seeds: Option<usize>,
    /// Accuracy target for the pointwise bound.
    #[arg(long)]
    pub eps: Option<f64>,
    /// Failure probability for the required-draws figure.
    #[arg(long)]
    pub delta: Option<f64>,
}

overlay!(DiagnoseParams { draws_sweep, conc_seeds, eps, delta });

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureParams {
    /// Number of features to keep.
    #[arg(long)]
    pub m_sel: Option<usize>,
    /// Ridge constant of the relaxed objective.
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub steps: Option<usize>,
    /// Evaluate the kernel exactly instead of through random features.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub exact: Option<bool>,
}

overlay!(FeatureParams { m_sel, epsilon, steps, exact });

/// Contents of a `--config` file.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    #[serde(default)]
    pub data: DataParams,
    #[serde(default)]
    pub kernels: KernelParams,
    #[serde(default)]
    pub train: TrainParams,
    #[serde(default)]
    pub select: SelectParams,
    #[serde(default)]
    pub diagnose: DiagnoseParams,
    #[serde(default)]
    pub features: FeatureParams,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| ConfigError(format!("{}: {e}", path.display())))
    }
}

fn parse_format(s: &str) -> std::result::Result<DataFormat, String> {
    s.parse().map_err(|e: kernelmix::Error| e.to_string())
}

fn de_format<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Option<DataFormat>, D::Error> {
    let s = Option::<String>::deserialize(d)?;
    s.map(|s| s.parse().map_err(serde::de::Error::custom)).transpose()
}

/// Parses `family:v1,v2` (bandwidths) or `family:gamma=g1,g2`.
pub fn parse_kernel_spec(spec: &str) -> Result<Vec<BaseKernel>> {
    let bad = |msg: &str| ConfigError(format!("kernel spec {spec:?}: {msg}"));
    let (family, values) = spec.split_once(':').ok_or_else(|| bad("expected family:values"))?;
    let family = KernelFamily::from_str(family.trim()).map_err(|e| bad(&e.to_string()))?;
    let (by_gamma, values) = match values.trim().strip_prefix("gamma=") {
        Some(rest) => (true, rest),
        None => (false, values.trim().strip_prefix("rho=").unwrap_or(values.trim())),
    };
    let kernels = values
        .split(',')
        .map(|v| {
            let v: f64 = v.trim().parse().map_err(|_| bad(&format!("cannot parse {v:?}")))?;
            let k = if by_gamma {
                BaseKernel::from_gamma(family, v)
            } else {
                BaseKernel::new(family, v)
            };
            k.map_err(|e| bad(&e.to_string()))
        })
        .collect::<Result<Vec<_>>>()?;
    if kernels.is_empty() {
        return Err(bad("no values"));
    }
    Ok(kernels)
}

impl KernelParams {
    pub fn kernels(&self) -> Result<Vec<BaseKernel>> {
        let specs = self.specs.as_deref().unwrap_or_default();
        if specs.is_empty() {
            return Err(ConfigError("no kernels given (use --kernel family:bandwidths)".into()));
        }
        let mut out = Vec::new();
        for s in specs {
            out.extend(parse_kernel_spec(s)?);
        }
        Ok(out)
    }

    pub fn draws(&self) -> Result<usize> {
        positive_count("draws", self.draws.unwrap_or(256))
    }
}

pub fn parse_schedule(s: &str) -> Result<StepSchedule> {
    let bad = || ConfigError(format!("schedule {s:?}: expected pegasos, constant:C or inv-sqrt:C"));
    let (kind, c) = match s.split_once(':') {
        Some((k, c)) => (k, Some(c.trim().parse::<f64>().map_err(|_| bad())?)),
        None => (s, None),
    };
    match (kind.trim(), c) {
        ("pegasos", None) => Ok(StepSchedule::Pegasos),
        ("constant", Some(c)) => Ok(StepSchedule::Constant(c)),
        ("inv-sqrt", Some(c)) => Ok(StepSchedule::InvSqrt(c)),
        _ => Err(bad()),
    }
}

impl TrainParams {
    pub fn config(&self, seed: u64) -> Result<TrainConfig> {
        let d = TrainConfig::default();
        let cfg = TrainConfig {
            radius: self.radius.unwrap_or(d.radius),
            lambda: self.lambda.unwrap_or(d.lambda),
            epochs: self.epochs.unwrap_or(d.epochs),
            batch_size: self.batch_size.or(d.batch_size),
            schedule: match &self.schedule {
                Some(s) => parse_schedule(s)?,
                None => d.schedule,
            },
            offset_step: self.offset_step.unwrap_or(d.offset_step),
            fit_offset: !self.no_offset.unwrap_or(!d.fit_offset),
            seed,
        };
        cfg.validate().map_err(|e| ConfigError(e.to_string()))?;
        Ok(cfg)
    }
}

impl SelectParams {
    pub fn grid(&self) -> Result<BandwidthGrid> {
        let err = |e: kernelmix::Error| ConfigError(format!("grid: {e}"));
        if let Some(g) = &self.grid {
            return BandwidthGrid::new(g.clone()).map_err(err);
        }
        match &self.grid_range {
            Some(r) => {
                let parts: Vec<&str> = r.split(':').collect();
                let bad = || ConfigError(format!("grid range {r:?}: expected lo:hi:count"));
                let [lo, hi, count] = parts[..] else { return Err(bad()) };
                let lo: f64 = lo.trim().parse().map_err(|_| bad())?;
                let hi: f64 = hi.trim().parse().map_err(|_| bad())?;
                let count: usize = count.trim().parse().map_err(|_| bad())?;
                BandwidthGrid::log_spaced(lo, hi, count).map_err(err)
            }
            None => Ok(BandwidthGrid::default()),
        }
    }
}

pub fn positive_count(name: &str, v: usize) -> Result<usize> {
    if v == 0 {
        return Err(ConfigError(format!("{name} must be at least 1")));
    }
    Ok(v)
}

pub fn positive(name: &str, v: f64) -> Result<f64> {
    if !(v > 0.0 && v.is_finite()) {
        return Err(ConfigError(format!("{name} must be positive, got {v}")));
    }
    Ok(v)
}
