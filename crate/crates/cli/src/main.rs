//! `kernelmix` command-line tool.
//!
//! Exit codes: 0 success, 1 other failure (including a violated diagnostics
//! invariant), 2 data error, 3 configuration error, 4 model integrity error.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{DataParams, DiagnoseParams, FeatureParams, FileConfig, KernelParams, Preset, SelectParams, TrainParams};

#[derive(Debug, thiserror::Error)]
#[error("configuration error: {0}")]
pub struct ConfigError(pub String);

#[derive(Debug, thiserror::Error)]
#[error("invariant violated: {0}")]
pub struct InvariantViolation(pub String);

#[derive(Debug, Parser)]
#[command(name = "kernelmix", version, about = "MMD-weighted multiple kernel learning with random features")]
struct Cli {
    /// TOML file with defaults for any option; flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed for every random stream.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Cap on worker threads.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic dataset as CSV (columns x1..xd,label).
    Generate {
        #[arg(long, value_enum)]
        preset: Preset,
        #[arg(long, default_value_t = 400)]
        n: usize,
        #[arg(long, default_value_t = 5)]
        d: usize,
        #[arg(long, default_value_t = 2.0)]
        separation: f64,
        #[arg(long)]
        output: PathBuf,
    },
    /// Score each kernel by MMD and write mixture weights.
    ///
    /// Writes scores.json and scores.csv with columns
    /// family,bandwidth,gamma,estimator,n_plus,n_minus,squared,value,weight.
    Score {
        #[command(flatten)]
        data: DataParams,
        #[command(flatten)]
        kernels: KernelParams,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Score kernels, draw features and train the mixture classifier.
    ///
    /// Writes model.json, train_report.json and train_log.csv with columns
    /// epoch,objective.
    Train {
        #[command(flatten)]
        data: DataParams,
        #[command(flatten)]
        kernels: KernelParams,
        #[command(flatten)]
        train: TrainParams,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Apply a trained model to a dataset.
    ///
    /// Writes a CSV with columns index,decision_value,soft_output,label.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "csv")]
        format: String,
        #[arg(long)]
        output: PathBuf,
    },
    /// Compare cross-validated and MMD bandwidth selection over a gamma grid.
    ///
    /// Writes selection.json and selection.csv with columns
    /// gamma,cv_mean,cv_std,mmd_score.
    Select {
        #[command(flatten)]
        data: DataParams,
        #[command(flatten)]
        kernels: KernelParams,
        #[command(flatten)]
        train: TrainParams,
        #[command(flatten)]
        select: SelectParams,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Relaxed kernel feature selection; writes features.json.
    Features {
        #[command(flatten)]
        data: DataParams,
        #[command(flatten)]
        kernels: KernelParams,
        #[command(flatten)]
        features: FeatureParams,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Complexity bounds and concentration of the feature matrix.
    ///
    /// Writes diagnostics.json, complexity.csv (one row per D, columns as
    /// the complexity report fields) and concentration.csv with columns
    /// kind,draws,seed,deviation. Exits 1 if the erfc bound exceeds the
    /// Khintchine bound.
    Diagnose {
        #[command(flatten)]
        data: DataParams,
        #[command(flatten)]
        kernels: KernelParams,
        #[command(flatten)]
        train: TrainParams,
        #[command(flatten)]
        diagnose: DiagnoseParams,
        #[arg(long)]
        out_dir: PathBuf,
    },
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<ConfigError>() {
            return 3;
        }
        if cause.is::<InvariantViolation>() {
            return 1;
        }
        if let Some(e) = cause.downcast_ref::<kernelmix::Error>() {
            return match e {
                kernelmix::Error::Integrity(_) => 4,
                kernelmix::Error::InvalidArgument(_) => 3,
                e if e.is_data_error() => 2,
                _ => 1,
            };
        }
    }
    1
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let file = match &cli.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    let seed = cli.seed.or(file.seed).unwrap_or(0);
    if let Some(t) = cli.threads.or(file.threads) {
        config::positive_count("threads", t)?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| anyhow::anyhow!(e))?;
    }
    match cli.command {
        Command::Generate { preset, n, d, separation, output } => {
            commands::generate(preset, n, d, separation, seed, &output)
        }
        Command::Score { data, kernels, out_dir } => commands::score(
            &data.overlay(file.data),
            &kernels.overlay(file.kernels),
            seed,
            &out_dir,
        ),
        Command::Train { data, kernels, train, out_dir } => commands::train(
            &data.overlay(file.data),
            &kernels.overlay(file.kernels),
            &train.overlay(file.train),
            seed,
            &out_dir,
        ),
        Command::Predict { model, data, format, output } => {
            let format = format.parse().map_err(|e: kernelmix::Error| ConfigError(e.to_string()))?;
            commands::predict(&model, &data, format, &output)
        }
        Command::Select { data, kernels, train, select, out_dir } => commands::select(
            &data.overlay(file.data),
            &kernels.overlay(file.kernels),
            &train.overlay(file.train),
            &select.overlay(file.select),
            seed,
            &out_dir,
        ),
        Command::Features { data, kernels, features, out_dir } => commands::features(
            &data.overlay(file.data),
            &kernels.overlay(file.kernels),
            &features.overlay(file.features),
            seed,
            &out_dir,
        ),
        Command::Diagnose { data, kernels, train, diagnose, out_dir } => commands::diagnose(
            &data.overlay(file.data),
            &kernels.overlay(file.kernels),
            &train.overlay(file.train),
            &diagnose.overlay(file.diagnose),
            seed,
            &out_dir,
        ),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 3 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let mut msg = e.to_string();
            for cause in e.chain().skip(1) {
                let c = cause.to_string();
                if !msg.contains(&c) {
                    msg = format!("{msg}: {c}");
                }
            }
            eprintln!("error: {msg}");
            ExitCode::from(exit_code(&e))
        }
    }
}
