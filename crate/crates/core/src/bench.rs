//! RMSE grids of denoising experts under regular inference and under
//! Active Tuning, averaged over independently trained models.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::container::{self, content_hash, hash_parts, BUNDLE_MAGIC};
use crate::datagen::{Dataset, Experiment, GeneratorSpec, NoiseSpec};
use crate::error::{Error, Result};
use crate::exec::{try_map_indexed, Parallelism};
use crate::model::io::{load_model, save_model};
use crate::model::{Drive, Model};
use crate::tensor::Precision;
use crate::train::{evaluate_open_loop, rmse, train_expert, TrainConfig};
use crate::tuning::{filter_stream, preset, TuningConfig};

/// Signal noise levels of the reference grids.
pub const SIGNAL_NOISE_GRID: [f64; 5] = [0.0, 0.1, 0.2, 0.5, 1.0];

const SIGNAL_STREAM: u64 = 0x7369_676e;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchPlan {
    pub experiment: Experiment,
    /// Training generator; its seed fixes the training set.
    pub generator: GeneratorSpec,
    pub train_count: usize,
    pub test_count: usize,
    /// Test sequence length; the training length when absent.
    #[serde(default)]
    pub test_steps: Option<usize>,
    /// Experts evaluated with regular inference.
    pub training_noise: Vec<f64>,
    /// Experts additionally driven with Active Tuning.
    #[serde(default)]
    pub tuning_noise: Vec<f64>,
    pub signal_noise: Vec<f64>,
    pub seeds: usize,
    /// Template for every expert; noise and seed are set per model.
    pub train: TrainConfig,
    /// Replaces the registered presets for every tuning cell when set.
    #[serde(default)]
    pub tuning_override: Option<TuningConfig>,
    /// Exemplar test sequences written as trace bundles.
    #[serde(default = "one")]
    pub exemplars: usize,
    /// Fill `wall_seconds`; off keeps results byte-reproducible.
    #[serde(default)]
    pub record_timing: bool,
    pub seed: u64,
}

fn one() -> usize {
    1
}

impl BenchPlan {
    /// Desk-scale plan: 3 seeds, reduced data, the reference noise grids.
    pub fn desk(experiment: Experiment) -> Self {
        let (generator, train_count, test_count, test_steps) = match experiment {
            Experiment::Wave => (GeneratorSpec::Wave(crate::datagen::WaveSpec { rows: 8, cols: 8, ..Default::default() }), 50, 10, Some(400)),
            other => (other.default_generator(), 500, 40, None),
        };
        BenchPlan {
            experiment,
            generator,
            train_count,
            test_count,
            test_steps,
            training_noise: vec![0.0, 0.1, 0.2, 0.5, 1.0],
            tuning_noise: vec![0.0, 0.05],
            signal_noise: SIGNAL_NOISE_GRID.to_vec(),
            seeds: 3,
            train: TrainConfig { epochs: if experiment == Experiment::Wave { 200 } else { 20 }, batch_size: 8, ..TrainConfig::for_experiment(experiment) },
            tuning_override: None,
            exemplars: 1,
            record_timing: false,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.training_noise.is_empty() && self.tuning_noise.is_empty() {
            return Err(Error::validation("bench plan has no models"));
        }
        if self.signal_noise.is_empty() {
            return Err(Error::validation("bench plan has no signal noise levels"));
        }
        if self.seeds == 0 || self.train_count == 0 || self.test_count == 0 {
            return Err(Error::validation("seeds, train_count and test_count must be positive"));
        }
        if self.generator.experiment() != self.experiment {
            return Err(Error::validation(format!(
                "generator produces {} data for a {} plan",
                self.generator.experiment(),
                self.experiment
            )));
        }
        self.generator.validate()?;
        if let Some(s) = self.signal_noise.iter().find(|s| !(**s >= 0.0 && s.is_finite())) {
            return Err(Error::validation(format!("signal noise {s} is not a non-negative number")));
        }
        for &t in self.training_noise.iter().chain(&self.tuning_noise) {
            TrainConfig { noise: t, ..self.train.clone() }.validate()?;
        }
        if let Some(o) = &self.tuning_override {
            o.validate()?;
        } else {
            let missing: Vec<String> = self
                .tuning_cells()
                .filter(|&(t, s)| preset(self.experiment, t, s).is_none())
                .map(|(t, s)| format!("{}:{t}:{s}", self.experiment))
                .collect();
            if !missing.is_empty() {
                return Err(Error::validation(format!("no tuning preset for {}", missing.join(", "))));
            }
        }
        Ok(())
    }

    fn model_noises(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.training_noise.iter().chain(&self.tuning_noise).copied().collect();
        v.sort_by(f64::total_cmp);
        v.dedup();
        v
    }

    fn regular_cells(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.training_noise.iter().flat_map(move |&t| self.signal_noise.iter().map(move |&s| (t, s)))
    }

    /// Tuning is not applied to clean signals.
    fn tuning_cells(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.tuning_noise
            .iter()
            .flat_map(move |&t| self.signal_noise.iter().filter(|&&s| s > 0.0).map(move |&s| (t, s)))
    }

    pub fn expected_cells(&self) -> usize {
        self.regular_cells().count() + self.tuning_cells().count()
    }

    pub fn tuning_config(&self, training_noise: f64, signal_noise: f64) -> Result<TuningConfig> {
        if let Some(o) = &self.tuning_override {
            return Ok(o.clone());
        }
        preset(self.experiment, training_noise, signal_noise)
            .map(|p| p.config())
            .ok_or_else(|| Error::validation(format!("no tuning preset for {}:{training_noise}:{signal_noise}", self.experiment)))
    }

    pub fn train_config(&self, noise: f64, seed_index: usize) -> TrainConfig {
        TrainConfig { noise, seed: self.seed.wrapping_add(seed_index as u64), ..self.train.clone() }
    }

    pub fn test_generator(&self) -> GeneratorSpec {
        let g = self.generator.test_split();
        match self.test_steps {
            Some(n) => g.with_steps(n),
            None => g,
        }
    }

    /// Observation noise for a signal level, shared by every model.
    pub fn signal_spec(&self, signal_noise: f64) -> NoiseSpec {
        let bits = signal_noise.to_bits();
        NoiseSpec::gaussian(signal_noise, self.seed ^ SIGNAL_STREAM ^ bits.rotate_left(17))
    }

    pub fn config_hash(&self) -> String {
        content_hash(self)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Regular,
    ActiveTuning,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Regular => "regular",
            Mode::ActiveTuning => "active_tuning",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub training_noise: f64,
    pub signal_noise: f64,
    pub mode: Mode,
    /// One RMSE per model seed.
    pub per_seed: Vec<f64>,
    pub rmse_mean: f64,
    pub rmse_std: f64,
    pub wall_seconds: f64,
}

impl Cell {
    fn new(training_noise: f64, signal_noise: f64, mode: Mode, per_seed: Vec<f64>, wall_seconds: f64) -> Self {
        let n = per_seed.len() as f64;
        let mean = per_seed.iter().sum::<f64>() / n;
        let std = if per_seed.len() > 1 {
            (per_seed.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Cell { training_noise, signal_noise, mode, per_seed, rmse_mean: mean, rmse_std: std, wall_seconds }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ResultGrid {
    pub experiment: Option<Experiment>,
    pub seeds: usize,
    pub cells: Vec<Cell>,
}

fn same(a: f64, b: f64) -> bool {
    (a - b).abs() < 1e-12
}

impl ResultGrid {
    pub fn get(&self, training_noise: f64, signal_noise: f64, mode: Mode) -> Option<&Cell> {
        self.cells
            .iter()
            .find(|c| c.mode == mode && same(c.training_noise, training_noise) && same(c.signal_noise, signal_noise))
    }

    /// Cells the plan asks for that the grid lacks.
    pub fn missing(&self, plan: &BenchPlan) -> Vec<String> {
        let want = plan
            .regular_cells()
            .map(|(t, s)| (t, s, Mode::Regular))
            .chain(plan.tuning_cells().map(|(t, s)| (t, s, Mode::ActiveTuning)));
        want.filter(|&(t, s, m)| self.get(t, s, m).is_none_or(|c| !c.rmse_mean.is_finite() || c.per_seed.len() != plan.seeds))
            .map(|(t, s, m)| format!("{}/{t}/{s}", m.name()))
            .collect()
    }

    pub fn to_csv(&self, config_hash: &str) -> String {
        let exp = self.experiment.map(|e| e.name()).unwrap_or("unknown");
        let mut s = format!("# config_hash={config_hash}\nexperiment,training_noise,signal_noise,mode,rmse_mean,rmse_std,seeds,wall_seconds\n");
        for c in &self.cells {
            writeln!(
                s,
                "{exp},{},{},{},{:.6},{:.6},{},{:.3}",
                c.training_noise,
                c.signal_noise,
                c.mode.name(),
                c.rmse_mean,
                c.rmse_std,
                c.per_seed.len(),
                c.wall_seconds
            )
            .unwrap();
        }
        s
    }
}

/// Teacher-forced RMSE of `model` on `test` under `noise`.
pub fn run_baseline_cell(model: &Model, test: &Dataset, noise: &NoiseSpec, mode: Parallelism) -> Result<f64> {
    evaluate_open_loop(model, test, noise, mode)
}

/// Filtered outputs of one noisy test sequence.
pub fn tune_sequence(model: &Model, cfg: &TuningConfig, observations: &[f64], stream_seed: u64) -> Result<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(stream_seed);
    Ok(filter_stream(model, cfg, observations, &mut rng)?.outputs)
}

/// Active Tuning RMSE against the clean signal, averaged over sequences.
pub fn run_tuning_cell(model: &Model, cfg: &TuningConfig, test: &Dataset, noise: &NoiseSpec, mode: Parallelism) -> Result<f64> {
    let noisy = test.clone().with_noise(noise)?;
    let errs = try_map_indexed(noisy.count(), mode, |i| {
        let out = tune_sequence(model, cfg, noisy.noisy(i), noise.seed.wrapping_add(i as u64))?;
        Ok(rmse(&out, noisy.clean(i)))
    })?;
    Ok(errs.iter().sum::<f64>() / errs.len() as f64)
}

/// Where trained models and generated datasets are kept between runs.
#[derive(Clone, Debug)]
pub struct Cache {
    dir: PathBuf,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct CacheStats {
    pub hits: usize,
    pub misses: usize,
}

impl Cache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Cache { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn dataset(&self, generator: &GeneratorSpec, count: usize, mode: Parallelism, stats: &mut CacheStats) -> Result<Dataset> {
        let key = hash_parts(&[&content_hash(generator), &count.to_string()]);
        let path = self.dir.join("data").join(format!("{}.atds", &key[..16]));
        if path.exists() {
            if let Ok((ds, header)) = Dataset::load(&path) {
                if header.config_hash == key {
                    stats.hits += 1;
                    return Ok(ds);
                }
            }
        }
        stats.misses += 1;
        let ds = Dataset::generate(generator, count, mode)?;
        ds.save(&path, Precision::F64, &key)?;
        Ok(ds)
    }

    fn model_path(&self, key: &str) -> PathBuf {
        self.dir.join("models").join(format!("{}.atpm", &key[..16]))
    }
}

/// Everything a finished plan produced.
#[derive(Clone, Debug)]
pub struct BenchRun {
    pub grid: ResultGrid,
    /// `models[k][s]`: expert for the k-th noise of [`BenchRun::model_noises`], seed `s`.
    pub models: Vec<Vec<Model>>,
    pub model_noises: Vec<f64>,
    pub test: Dataset,
    pub cache: CacheStats,
}

impl BenchRun {
    pub fn model(&self, training_noise: f64, seed: usize) -> Option<&Model> {
        let k = self.model_noises.iter().position(|&t| same(t, training_noise))?;
        self.models.get(k)?.get(seed)
    }
}

fn train_models(plan: &BenchPlan, train: &Dataset, cache: Option<&Cache>, mode: Parallelism, stats: &mut CacheStats) -> Result<(Vec<f64>, Vec<Vec<Model>>)> {
    let noises = plan.model_noises();
    let jobs: Vec<(usize, usize)> = (0..noises.len()).flat_map(|k| (0..plan.seeds).map(move |s| (k, s))).collect();
    let data_hash = hash_parts(&[&content_hash(train.generator()), &train.count().to_string()]);
    let keyed: Vec<(TrainConfig, String)> = jobs
        .iter()
        .map(|&(k, s)| {
            let cfg = plan.train_config(noises[k], s);
            let key = hash_parts(&[&content_hash(&cfg), &data_hash]);
            (cfg, key)
        })
        .collect();
    let cached: Vec<Option<Model>> = keyed
        .iter()
        .map(|(_, key)| {
            let c = cache?;
            let (m, h) = load_model(&c.model_path(key)).ok()?;
            (h.config_hash == *key).then_some(m)
        })
        .collect();
    stats.hits += cached.iter().filter(|m| m.is_some()).count();
    stats.misses += cached.iter().filter(|m| m.is_none()).count();
    let trained = try_map_indexed(jobs.len(), mode, |j| match &cached[j] {
        Some(m) => Ok(m.clone()),
        None => {
            let (cfg, key) = &keyed[j];
            let model = train_expert(cfg, train, mode)?.model;
            if let Some(c) = cache {
                let meta = serde_json::json!({ "training_noise": cfg.noise, "seed": cfg.seed, "epochs": cfg.epochs });
                save_model(&c.model_path(key), &model, Precision::F64, key, meta)?;
            }
            Ok(model)
        }
    })?;
    let mut it = trained.into_iter();
    let models = (0..noises.len()).map(|_| it.by_ref().take(plan.seeds).collect()).collect();
    Ok((noises, models))
}

/// Execute a plan end to end.
pub fn run_plan(plan: &BenchPlan, cache: Option<&Cache>, mode: Parallelism) -> Result<BenchRun> {
    plan.validate()?;
    let mut stats = CacheStats::default();
    let (train, test) = match cache {
        Some(c) => (
            c.dataset(&plan.generator, plan.train_count, mode, &mut stats)?,
            c.dataset(&plan.test_generator(), plan.test_count, mode, &mut stats)?,
        ),
        None => (
            Dataset::generate(&plan.generator, plan.train_count, mode)?,
            Dataset::generate(&plan.test_generator(), plan.test_count, mode)?,
        ),
    };
    let (model_noises, models) = train_models(plan, &train, cache, mode, &mut stats)?;
    let run = BenchRun { grid: ResultGrid::default(), models, model_noises, test, cache: stats };

    let cells: Vec<(f64, f64, Mode)> = plan
        .regular_cells()
        .map(|(t, s)| (t, s, Mode::Regular))
        .chain(plan.tuning_cells().map(|(t, s)| (t, s, Mode::ActiveTuning)))
        .collect();
    let jobs: Vec<(usize, usize)> = (0..cells.len()).flat_map(|c| (0..plan.seeds).map(move |s| (c, s))).collect();
    let results = try_map_indexed(jobs.len(), mode, |j| {
        let (c, seed) = jobs[j];
        let (t, s, m) = cells[c];
        let model = run.model(t, seed).expect("every cell's model was trained");
        let noise = plan.signal_spec(s);
        let start = Instant::now();
        let r = match m {
            Mode::Regular => run_baseline_cell(model, &run.test, &noise, mode)?,
            Mode::ActiveTuning => run_tuning_cell(model, &plan.tuning_config(t, s)?, &run.test, &noise, mode)?,
        };
        if !r.is_finite() {
            return Err(Error::Numeric { step: 0, what: format!("{} cell {t}/{s} produced RMSE {r}", m.name()) });
        }
        Ok((r, start.elapsed().as_secs_f64()))
    })?;
    let grid_cells = cells
        .iter()
        .enumerate()
        .map(|(c, &(t, s, m))| {
            let slice = &results[c * plan.seeds..(c + 1) * plan.seeds];
            let wall = if plan.record_timing { slice.iter().map(|r| r.1).sum() } else { 0.0 };
            Cell::new(t, s, m, slice.iter().map(|r| r.0).collect(), wall)
        })
        .collect();
    Ok(BenchRun { grid: ResultGrid { experiment: Some(plan.experiment), seeds: plan.seeds, cells: grid_cells }, ..run })
}

pub const TRACE_CHANNELS: [&str; 4] = ["ground_truth", "noisy", "baseline", "tuned"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceHeader {
    pub format: String,
    pub version: u32,
    pub experiment: Experiment,
    pub sample: usize,
    pub training_noise: f64,
    pub signal_noise: f64,
    pub steps: usize,
    /// Values per step in every channel.
    pub width: usize,
    /// Payload holds one `steps x width` block per channel, in this order.
    pub channels: Vec<String>,
    /// Grid position when the bundle holds a single pixel.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pixel: Option<[usize; 2]>,
    pub precision: Precision,
    pub config_hash: String,
}

/// Four aligned channels of one exemplar sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceBundle {
    pub header: TraceHeader,
    pub data: Vec<f64>,
}

impl TraceBundle {
    pub fn channel(&self, name: &str) -> Option<&[f64]> {
        let k = self.header.channels.iter().position(|c| c == name)?;
        let n = self.header.steps * self.header.width;
        Some(&self.data[k * n..(k + 1) * n])
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        container::write(path, BUNDLE_MAGIC, &self.header, self.header.precision, &self.data)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (header, data): (TraceHeader, Vec<f64>) = container::read(path, BUNDLE_MAGIC)?;
        if data.len() != header.channels.len() * header.steps * header.width {
            return Err(Error::Format { path: path.to_path_buf(), reason: "payload does not match the channel layout".into() });
        }
        Ok(TraceBundle { header, data })
    }

    /// One pixel's time series from every channel of a grid bundle.
    pub fn pixel(&self, row: usize, col: usize, cols: usize) -> Result<TraceBundle> {
        let idx = row * cols + col;
        if idx >= self.header.width {
            return Err(Error::contract(format!("pixel ({row}, {col}) outside a {}-wide field", self.header.width)));
        }
        let data = self.data.chunks(self.header.width).map(|step| step[idx]).collect();
        let header = TraceHeader { width: 1, pixel: Some([row, col]), ..self.header.clone() };
        Ok(TraceBundle { header, data })
    }
}

/// Exemplar traces for the seed-0 expert trained on the first tuning noise.
/// The first step has no prediction, so its baseline repeats the observation.
pub fn exemplar_bundles(plan: &BenchPlan, run: &BenchRun, config_hash: &str) -> Result<Vec<TraceBundle>> {
    let t = *plan.tuning_noise.first().or(plan.training_noise.first()).expect("validated plan");
    let s = if plan.signal_noise.iter().any(|&s| same(s, 0.5)) {
        0.5
    } else {
        plan.signal_noise.iter().copied().fold(0.0, f64::max)
    };
    let model = run.model(t, 0).expect("seed 0 model");
    let noise = plan.signal_spec(s);
    let noisy = run.test.clone().with_noise(&noise)?;
    let tuned_cfg = if s > 0.0 && plan.tuning_noise.iter().any(|&x| same(x, t)) { Some(plan.tuning_config(t, s)?) } else { None };
    let d = noisy.channels();
    let steps = noisy.steps();
    (0..plan.exemplars.min(noisy.count()))
        .map(|i| {
            let obs = noisy.noisy(i);
            let mut baseline = obs[..d].to_vec();
            baseline.extend_from_slice(model.rollout(&model.zero_state(), Drive::TeacherForced(&obs[..(steps - 1) * d]))?.outputs());
            let tuned = match &tuned_cfg {
                Some(c) => tune_sequence(model, c, obs, noise.seed.wrapping_add(i as u64))?,
                None => baseline.clone(),
            };
            let mut data = Vec::with_capacity(4 * obs.len());
            for part in [noisy.clean(i), obs, &baseline, &tuned] {
                data.extend_from_slice(part);
            }
            let header = TraceHeader {
                format: "atune-traces".into(),
                version: 1,
                experiment: plan.experiment,
                sample: i,
                training_noise: t,
                signal_noise: s,
                steps,
                width: d,
                channels: TRACE_CHANNELS.iter().map(|c| c.to_string()).collect(),
                pixel: None,
                precision: Precision::F64,
                config_hash: config_hash.to_string(),
            };
            Ok(TraceBundle { header, data })
        })
        .collect()
}

/// Files written by [`emit_report`].
#[derive(Clone, Debug, Default)]
pub struct Report {
    pub csv: PathBuf,
    pub bundles: Vec<PathBuf>,
}

/// Write `results.csv` and the trace bundles (plus a centre-pixel bundle
/// per exemplar for grid experiments) into `dir`.
pub fn emit_report(plan: &BenchPlan, grid: &ResultGrid, bundles: &[TraceBundle], dir: &Path, config_hash: &str) -> Result<Report> {
    plan.validate()?;
    let missing = grid.missing(plan);
    if !missing.is_empty() {
        return Err(Error::validation(format!("incomplete result grid, missing {}", missing.join(", "))));
    }
    std::fs::create_dir_all(dir)?;
    let csv = dir.join("results.csv");
    std::fs::write(&csv, grid.to_csv(config_hash))?;
    let mut report = Report { csv, bundles: Vec::new() };
    for b in bundles {
        let name = format!("trace_{}_{:03}.attb", b.header.experiment, b.header.sample);
        let p = dir.join(name);
        b.save(&p)?;
        report.bundles.push(p);
        if let Some(g) = plan.generator.grid() {
            let centre = b.pixel(g.rows / 2, g.cols / 2, g.cols)?;
            let p = dir.join(format!("trace_{}_{:03}_center.attb", b.header.experiment, b.header.sample));
            centre.save(&p)?;
            report.bundles.push(p);
        }
    }
    Ok(report)
}
