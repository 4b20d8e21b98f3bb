//! Run configuration file. Every field is optional; command-line flags and
//! environment variables take precedence over values read here.

use std::path::{Path, PathBuf};

use atune_core::bench::BenchPlan;
use atune_core::datagen::GeneratorSpec;
use atune_core::tuning::TuningTarget;
use atune_core::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub precision: Option<String>,
    pub workers: Option<usize>,
    #[serde(default)]
    pub gen: GenSection,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub tune: TuneSection,
    #[serde(default)]
    pub bench: BenchSection,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenSection {
    pub experiment: Option<String>,
    pub train: Option<usize>,
    pub test: Option<usize>,
    pub steps: Option<usize>,
    pub test_steps: Option<usize>,
    /// Gaussian noise ratio stored in the observed channel.
    pub noise: Option<f64>,
    /// Full generator parameters; `experiment` and `steps` still override.
    pub generator: Option<GeneratorSpec>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub experiment: Option<String>,
    pub data: Option<PathBuf>,
    pub noise: Option<Vec<f64>>,
    pub seeds: Option<usize>,
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub hidden: Option<usize>,
    pub rate: Option<f64>,
    pub beta1: Option<f64>,
    pub beta2: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TuneSection {
    pub model: Option<PathBuf>,
    pub preset: Option<String>,
    pub data: Option<PathBuf>,
    pub signal_noise: Option<f64>,
    pub samples: Option<usize>,
    pub horizon: Option<usize>,
    pub cycles: Option<usize>,
    pub rate: Option<f64>,
    pub beta1: Option<f64>,
    pub beta2: Option<f64>,
    pub target: Option<TuningTarget>,
    pub init_std: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchSection {
    pub experiment: Option<String>,
    /// Complete plan; the other keys and flags adjust it.
    pub plan: Option<BenchPlan>,
    pub seeds: Option<usize>,
    pub train_count: Option<usize>,
    pub test_count: Option<usize>,
    pub epochs: Option<usize>,
    pub training_noise: Option<Vec<f64>>,
    pub tuning_noise: Option<Vec<f64>>,
    pub signal_noise: Option<Vec<f64>>,
    pub exemplars: Option<usize>,
    pub record_timing: Option<bool>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::MissingArtifact(path.to_path_buf()),
            _ => Error::Io(e),
        })?;
        Self::parse(&text).map_err(|e| match e {
            Error::Validation(m) => Error::Validation(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Validation(e.message().to_string()))
    }
}
