//! Seeded generators for the three benchmark systems and the dataset file
//! format.
//!
//! Sample `i` of a dataset draws from its own ChaCha stream (`seed`, stream
//! `i`), so datasets are identical whether generated in parallel or not and
//! a prefix of a larger dataset equals the smaller one.

pub mod mso;
pub mod noise;
pub mod pendulum;
pub mod wave;

use std::fmt;
use std::path::Path;

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::container::{self, DATASET_MAGIC};
use crate::error::{Error, Result};
use crate::exec::{try_map_indexed, Parallelism};
use crate::model::io::GridExtents;
use crate::tensor::Precision;

pub use mso::{gen_mso, MsoSpec, MsoWaves};
pub use noise::{corrupt, NoiseKind, NoiseSpec, SignalStats, TRAINING_NOISE_GRID};
pub use pendulum::{gen_pendulum, pendulum_accelerations, rk4_step, PendulumObservable, PendulumSpec, PendulumState};
pub use wave::{gen_wave, wave_step, WaveSpec};

const TEST_STREAM: u64 = 0x7465_7374;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Experiment {
    Mso,
    Pendulum,
    Wave,
}

impl Experiment {
    pub const ALL: [Experiment; 3] = [Experiment::Mso, Experiment::Pendulum, Experiment::Wave];

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mso" => Ok(Experiment::Mso),
            "pendulum" => Ok(Experiment::Pendulum),
            "wave" => Ok(Experiment::Wave),
            other => Err(Error::validation(format!("unknown experiment `{other}`"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Experiment::Mso => "mso",
            Experiment::Pendulum => "pendulum",
            Experiment::Wave => "wave",
        }
    }

    /// Default generator for this experiment.
    pub fn default_generator(self) -> GeneratorSpec {
        match self {
            Experiment::Mso => GeneratorSpec::Mso(MsoSpec::default()),
            Experiment::Pendulum => GeneratorSpec::Pendulum(PendulumSpec::default()),
            Experiment::Wave => GeneratorSpec::Wave(WaveSpec::default()),
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum GeneratorSpec {
    Mso(MsoSpec),
    Pendulum(PendulumSpec),
    Wave(WaveSpec),
}

impl GeneratorSpec {
    pub fn experiment(&self) -> Experiment {
        match self {
            GeneratorSpec::Mso(_) => Experiment::Mso,
            GeneratorSpec::Pendulum(_) => Experiment::Pendulum,
            GeneratorSpec::Wave(_) => Experiment::Wave,
        }
    }

    pub fn steps(&self) -> usize {
        match self {
            GeneratorSpec::Mso(s) => s.steps,
            GeneratorSpec::Pendulum(s) => s.steps,
            GeneratorSpec::Wave(s) => s.steps,
        }
    }

    pub fn seed(&self) -> u64 {
        match self {
            GeneratorSpec::Mso(s) => s.seed,
            GeneratorSpec::Pendulum(s) => s.seed,
            GeneratorSpec::Wave(s) => s.seed,
        }
    }

    pub fn with_steps(mut self, steps: usize) -> Self {
        match &mut self {
            GeneratorSpec::Mso(s) => s.steps = steps,
            GeneratorSpec::Pendulum(s) => s.steps = steps,
            GeneratorSpec::Wave(s) => s.steps = steps,
        }
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        match &mut self {
            GeneratorSpec::Mso(s) => s.seed = seed,
            GeneratorSpec::Pendulum(s) => s.seed = seed,
            GeneratorSpec::Wave(s) => s.seed = seed,
        }
        self
    }

    /// Generator for the held-out split: same spec, independent seed.
    pub fn test_split(&self) -> GeneratorSpec {
        self.clone().with_seed(self.seed() ^ TEST_STREAM)
    }

    /// Values per time step.
    pub fn channels(&self) -> usize {
        match self {
            GeneratorSpec::Mso(_) => 1,
            GeneratorSpec::Pendulum(_) => 2,
            GeneratorSpec::Wave(s) => s.cells(),
        }
    }

    pub fn grid(&self) -> Option<GridExtents> {
        match self {
            GeneratorSpec::Wave(s) => Some(GridExtents { rows: s.rows, cols: s.cols }),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            GeneratorSpec::Mso(s) => s.validate(),
            GeneratorSpec::Pendulum(s) => s.validate(),
            GeneratorSpec::Wave(s) => s.validate(),
        }
    }

    /// Clean sequence of sample `index`.
    pub fn sample(&self, index: usize) -> Result<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed());
        rng.set_stream(index as u64);
        match self {
            GeneratorSpec::Mso(s) => gen_mso(s, &mut rng),
            GeneratorSpec::Pendulum(s) => gen_pendulum(s, &mut rng),
            GeneratorSpec::Wave(s) => gen_wave(s, &mut rng),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetHeader {
    pub format: String,
    pub version: u32,
    pub experiment: Experiment,
    pub generator: GeneratorSpec,
    pub count: usize,
    pub steps: usize,
    pub channels: usize,
    pub precision: Precision,
    pub seed: u64,
    #[serde(default)]
    pub noise: Option<NoiseSpec>,
    /// Statistics of the clean block.
    pub base: SignalStats,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridExtents>,
    pub config_hash: String,
}

/// `count` sequences of `steps x channels` values, clean and observed.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    generator: GeneratorSpec,
    count: usize,
    steps: usize,
    channels: usize,
    noise: Option<NoiseSpec>,
    base: SignalStats,
    clean: Vec<f64>,
    noisy: Vec<f64>,
}

impl Dataset {
    /// Generate `count` clean samples; the noisy block starts as a copy.
    pub fn generate(generator: &GeneratorSpec, count: usize, mode: Parallelism) -> Result<Self> {
        generator.validate()?;
        if count == 0 {
            return Err(Error::validation("a dataset needs at least one sample"));
        }
        let samples = try_map_indexed(count, mode, |i| generator.sample(i))?;
        let clean: Vec<f64> = samples.concat();
        Self::from_clean(generator.clone(), count, clean)
    }

    /// Wrap existing clean values laid out `[sample][time][channel]`.
    pub fn from_clean(generator: GeneratorSpec, count: usize, clean: Vec<f64>) -> Result<Self> {
        let steps = generator.steps();
        let channels = generator.channels();
        if clean.len() != count * steps * channels {
            return Err(Error::contract(format!(
                "{} values for {count} samples of {steps} x {channels}",
                clean.len()
            )));
        }
        if let Some(i) = clean.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numeric { step: (i / channels) % steps, what: format!("generated value {}", clean[i]) });
        }
        let base = SignalStats::of(&clean);
        Ok(Dataset { generator, count, steps, channels, noise: None, base, noisy: clean.clone(), clean })
    }

    /// Fill the noisy block from the clean one. Replaces earlier noise.
    pub fn add_noise(&mut self, spec: &NoiseSpec) -> Result<()> {
        self.noisy = corrupt(&self.clean, spec, &self.base)?;
        self.noise = Some(*spec);
        Ok(())
    }

    pub fn with_noise(mut self, spec: &NoiseSpec) -> Result<Self> {
        self.add_noise(spec)?;
        Ok(self)
    }

    pub fn experiment(&self) -> Experiment {
        self.generator.experiment()
    }

    pub fn generator(&self) -> &GeneratorSpec {
        &self.generator
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn noise(&self) -> Option<&NoiseSpec> {
        self.noise.as_ref()
    }

    pub fn base(&self) -> &SignalStats {
        &self.base
    }

    pub fn grid(&self) -> Option<GridExtents> {
        self.generator.grid()
    }

    fn span(&self, i: usize) -> std::ops::Range<usize> {
        let n = self.steps * self.channels;
        i * n..(i + 1) * n
    }

    /// Clean sequence `i`, step-major.
    pub fn clean(&self, i: usize) -> &[f64] {
        &self.clean[self.span(i)]
    }

    pub fn noisy(&self, i: usize) -> &[f64] {
        &self.noisy[self.span(i)]
    }

    pub fn clean_values(&self) -> &[f64] {
        &self.clean
    }

    pub fn noisy_values(&self) -> &[f64] {
        &self.noisy
    }

    /// First `count` samples.
    pub fn truncated(&self, count: usize) -> Result<Self> {
        if count == 0 || count > self.count {
            return Err(Error::validation(format!("cannot take {count} of {} samples", self.count)));
        }
        let n = count * self.steps * self.channels;
        Ok(Dataset {
            count,
            clean: self.clean[..n].to_vec(),
            noisy: self.noisy[..n].to_vec(),
            ..self.clone()
        })
    }

    pub fn header(&self, precision: Precision, config_hash: &str) -> DatasetHeader {
        DatasetHeader {
            format: "atune-dataset".into(),
            version: 1,
            experiment: self.experiment(),
            generator: self.generator.clone(),
            count: self.count,
            steps: self.steps,
            channels: self.channels,
            precision,
            seed: self.generator.seed(),
            noise: self.noise,
            base: self.base,
            grid: self.grid(),
            config_hash: config_hash.to_string(),
        }
    }

    pub fn save(&self, path: &Path, precision: Precision, config_hash: &str) -> Result<()> {
        let mut payload = Vec::with_capacity(self.clean.len() * 2);
        payload.extend_from_slice(&self.clean);
        payload.extend_from_slice(&self.noisy);
        container::write(path, DATASET_MAGIC, &self.header(precision, config_hash), precision, &payload)
    }

    pub fn load(path: &Path) -> Result<(Self, DatasetHeader)> {
        let (header, payload): (DatasetHeader, Vec<f64>) = container::read(path, DATASET_MAGIC)?;
        let bad = |reason: String| Error::Format { path: path.to_path_buf(), reason };
        if header.steps != header.generator.steps() || header.channels != header.generator.channels() {
            return Err(bad("header dimensions disagree with the generator".into()));
        }
        let n = header.count * header.steps * header.channels;
        if payload.len() != 2 * n {
            return Err(bad(format!("payload holds {} values, expected {}", payload.len(), 2 * n)));
        }
        let (clean, noisy) = payload.split_at(n);
        let ds = Dataset {
            generator: header.generator.clone(),
            count: header.count,
            steps: header.steps,
            channels: header.channels,
            noise: header.noise,
            base: header.base,
            clean: clean.to_vec(),
            noisy: noisy.to_vec(),
        };
        Ok((ds, header))
    }
}
