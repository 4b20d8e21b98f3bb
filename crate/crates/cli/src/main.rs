//! `atune`: generate datasets, train denoising experts, run Active Tuning
//! over stored or live streams, and execute benchmark plans.
//!
//! Settings resolve in this order, first hit wins: command-line flag,
//! environment variable (`ATUNE_OUT`, `ATUNE_WORKERS`), `--config` file,
//! built-in default.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use atune_core::Error;
use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "atune", version, about = "Active Tuning benchmark driver")]
pub struct Cli {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Output root directory [default: out].
    #[arg(long, global = true, env = "ATUNE_OUT", value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Worker threads for data-parallel loops.
    #[arg(long, global = true, env = "ATUNE_WORKERS")]
    pub workers: Option<usize>,
    /// Storage precision of written payloads: f32 or f64.
    #[arg(long, global = true)]
    pub precision: Option<String>,
    /// Global random seed [default: 0].
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Run every loop on the calling thread.
    #[arg(long, global = true)]
    pub sequential: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a training and a test dataset.
    Gen(GenArgs),
    /// Train denoising experts on a stored dataset.
    Train(TrainArgs),
    /// Filter sequences with Active Tuning and print per-step records.
    Tune(TuneArgs),
    /// Run a benchmark plan and write its result grid.
    Bench(BenchArgs),
    /// Print the header of a stored file.
    Inspect { file: PathBuf },
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long)]
    pub experiment: Option<String>,
    /// Training sequences.
    #[arg(long)]
    pub train: Option<usize>,
    /// Test sequences.
    #[arg(long)]
    pub test: Option<usize>,
    /// Training sequence length.
    #[arg(long)]
    pub steps: Option<usize>,
    /// Test sequence length.
    #[arg(long)]
    pub test_steps: Option<usize>,
    /// Gaussian noise ratio stored alongside the clean signal.
    #[arg(long)]
    pub noise: Option<f64>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub experiment: Option<String>,
    /// Training dataset [default: <out>/data/<experiment>_train.atds].
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Training noise ratios, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub noise: Option<Vec<f64>>,
    /// Independently initialized models per noise ratio.
    #[arg(long)]
    pub seeds: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long = "optimizer-rate")]
    pub rate: Option<f64>,
    #[arg(long = "optimizer-beta1")]
    pub beta1: Option<f64>,
    #[arg(long = "optimizer-beta2")]
    pub beta2: Option<f64>,
}

#[derive(Debug, Args)]
pub struct TuneArgs {
    /// Trained parameter file.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Registered hyperparameters as experiment:training_noise:signal_noise.
    #[arg(long)]
    pub preset: Option<String>,
    /// Dataset to filter.
    #[arg(long, conflicts_with = "stdin")]
    pub data: Option<PathBuf>,
    /// Corrupt the dataset's clean signal with this Gaussian ratio.
    #[arg(long)]
    pub signal_noise: Option<f64>,
    /// Sequences taken from the dataset [default: 1].
    #[arg(long)]
    pub samples: Option<usize>,
    /// Read observation rows from standard input.
    #[arg(long)]
    pub stdin: bool,
    /// Write records here instead of standard output.
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long)]
    pub horizon: Option<usize>,
    #[arg(long)]
    pub cycles: Option<usize>,
    #[arg(long)]
    pub rate: Option<f64>,
    #[arg(long)]
    pub beta1: Option<f64>,
    #[arg(long)]
    pub beta2: Option<f64>,
    /// hidden or hidden_and_cell.
    #[arg(long)]
    pub target: Option<String>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long)]
    pub experiment: Option<String>,
    #[arg(long)]
    pub seeds: Option<usize>,
    #[arg(long)]
    pub train_count: Option<usize>,
    #[arg(long)]
    pub test_count: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    pub training_noise: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    pub tuning_noise: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    pub signal_noise: Option<Vec<f64>>,
    #[arg(long)]
    pub exemplars: Option<usize>,
    /// Record wall-clock seconds per cell (results stop being byte-stable).
    #[arg(long)]
    pub timing: bool,
    /// Neither read nor write the model and dataset cache.
    #[arg(long)]
    pub no_cache: bool,
}

/// Process exit status for an error.
pub fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Validation(_) | Error::Config(_) | Error::Contract(_) | Error::Format { .. } | Error::Json(_) => 2,
        Error::Numeric { .. } | Error::Divergence { .. } => 3,
        Error::MissingArtifact(_) => 4,
        Error::Io(_) => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("atune: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
