//! Denoising experts: teacher-forced training on noisy inputs against clean
//! one-step-ahead targets.

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::datagen::{Dataset, Experiment, NoiseSpec, TRAINING_NOISE_GRID};
use crate::error::{Error, Result};
use crate::exec::{try_map_indexed, Parallelism};
use crate::model::{Drive, GridModelParams, LstmParams, Model, ModelKind};
use crate::optim::{AdamConfig, AdamState};

/// Offset mixed into the training seed for the input-noise stream, so
/// weights and noise never share a random stream.
const NOISE_STREAM: u64 = 0x006e_6f69_7365;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub model: ModelKind,
    pub hidden: usize,
    /// Input noise ratio, one of [`TRAINING_NOISE_GRID`].
    pub noise: f64,
    pub epochs: usize,
    pub batch_size: usize,
    #[serde(default)]
    pub adam: AdamConfig,
    pub seed: u64,
}

impl TrainConfig {
    /// Defaults for an experiment: scalar LSTM with 32 units and 100 epochs,
    /// or a grid model with 8 units and 200 epochs for the wave.
    pub fn for_experiment(exp: Experiment) -> Self {
        let (model, hidden, epochs) = match exp {
            Experiment::Mso | Experiment::Pendulum => (ModelKind::Lstm, 32, 100),
            Experiment::Wave => (ModelKind::Grid, 8, 200),
        };
        TrainConfig { model, hidden, noise: 0.0, epochs, batch_size: 32, adam: AdamConfig::default(), seed: 0 }
    }

    pub fn validate(&self) -> Result<()> {
        if !TRAINING_NOISE_GRID.iter().any(|&r| (r - self.noise).abs() < 1e-12) {
            return Err(Error::validation(format!(
                "training noise {} is not one of {:?}",
                self.noise, TRAINING_NOISE_GRID
            )));
        }
        if self.epochs == 0 {
            return Err(Error::validation("training needs at least one epoch"));
        }
        if self.batch_size == 0 || self.hidden == 0 {
            return Err(Error::validation("batch size and hidden size must be positive"));
        }
        self.adam.validate()
    }

    pub fn noise_spec(&self) -> NoiseSpec {
        NoiseSpec::gaussian(self.noise, self.seed ^ NOISE_STREAM)
    }

    /// Fresh model shaped for `data`.
    pub fn init_model(&self, data: &Dataset) -> Result<Model> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        match (self.model, data.grid()) {
            (ModelKind::Lstm, _) => {
                let d = data.channels();
                Ok(Model::Lstm(LstmParams::init_uniform(d, self.hidden, d, &mut rng)))
            }
            (ModelKind::Grid, Some(g)) => Ok(Model::Grid(GridModelParams::init_uniform(g.rows, g.cols, self.hidden, &mut rng))),
            (ModelKind::Grid, None) => Err(Error::config("grid models need a grid dataset")),
        }
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: Model,
    /// Mean squared error of each epoch, measured during the epoch.
    pub history: Vec<f64>,
}

fn check_fit(model: &Model, data: &Dataset) -> Result<()> {
    if model.input_size() != data.channels() || model.output_size() != data.channels() {
        return Err(Error::contract(format!(
            "model maps {} -> {} values, dataset has {} channels",
            model.input_size(),
            model.output_size(),
            data.channels()
        )));
    }
    if data.steps() < 2 {
        return Err(Error::validation("sequences need at least two steps to form targets"));
    }
    Ok(())
}

/// Squared error sum and parameter gradient of one sequence.
fn sample_gradient(model: &Model, inputs: &[f64], clean: &[f64], d: usize, norm: f64) -> Result<(f64, LstmParams)> {
    let steps = clean.len() / d - 1;
    let trace = model.rollout(&model.zero_state(), Drive::TeacherForced(&inputs[..steps * d]))?;
    let pred = trace.outputs();
    let target = &clean[d..];
    let mut sq = 0.0;
    let mut grads = Vec::with_capacity(pred.len());
    for (p, y) in pred.iter().zip(target) {
        let e = p - y;
        sq += e * e;
        grads.push(2.0 * e * norm);
    }
    let mut acc = model.cell().zeros_like();
    model.backward_into(&trace, &grads, &mut acc)?;
    Ok((sq, acc))
}

/// Train a model on `data` from the configuration's initialization.
pub fn train_expert(cfg: &TrainConfig, data: &Dataset, mode: Parallelism) -> Result<TrainOutcome> {
    cfg.validate()?;
    let model = cfg.init_model(data)?;
    train_from(model, cfg, data, mode, |_, _| {})
}

/// Continue training `model`. `on_epoch(epoch, mse)` runs after each epoch.
pub fn train_from<F>(mut model: Model, cfg: &TrainConfig, data: &Dataset, mode: Parallelism, mut on_epoch: F) -> Result<TrainOutcome>
where
    F: FnMut(usize, f64),
{
    cfg.validate()?;
    check_fit(&model, data)?;
    let noisy = data.clone().with_noise(&cfg.noise_spec())?;
    let d = data.channels();
    let per_sample = ((data.steps() - 1) * d) as f64;
    let mut order: Vec<usize> = (0..data.count()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = AdamState::new(model.cell().num_params());
    let mut flat = vec![0.0; model.cell().num_params()];
    let mut history = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_sq = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let norm = 1.0 / (per_sample * batch.len() as f64);
            let parts = try_map_indexed(batch.len(), mode, |k| {
                let i = batch[k];
                sample_gradient(&model, noisy.noisy(i), noisy.clean(i), d, norm)
            })
            .map_err(|e| match e {
                Error::Numeric { .. } => Error::Divergence { epoch, loss: f64::NAN },
                other => other,
            })?;
            let mut total = model.cell().zeros_like();
            for (sq, g) in &parts {
                epoch_sq += sq;
                total.axpy(1.0, g);
            }
            flatten(&total, &mut flat);
            let mut params = flatten_owned(model.cell());
            adam.step(&cfg.adam, &mut params, &flat).map_err(|_| Error::Divergence { epoch, loss: f64::NAN })?;
            unflatten(&params, model.cell_mut());
        }
        let mse = epoch_sq / (per_sample * data.count() as f64);
        if !mse.is_finite() || !model.cell().is_finite() {
            return Err(Error::Divergence { epoch, loss: mse });
        }
        history.push(mse);
        on_epoch(epoch, mse);
    }
    Ok(TrainOutcome { model, history })
}

fn flatten(p: &LstmParams, out: &mut [f64]) {
    let mut off = 0;
    for t in p.tensors() {
        out[off..off + t.len()].copy_from_slice(t.data());
        off += t.len();
    }
}

fn flatten_owned(p: &LstmParams) -> Vec<f64> {
    let mut v = vec![0.0; p.num_params()];
    flatten(p, &mut v);
    v
}

fn unflatten(v: &[f64], p: &mut LstmParams) {
    let mut off = 0;
    for t in p.tensors_mut() {
        let n = t.len();
        t.data_mut().copy_from_slice(&v[off..off + n]);
        off += n;
    }
}

/// Anything that maps an input sequence to one-step-ahead predictions.
pub trait Predictor: Sync {
    /// `inputs` holds `steps` step-major input vectors; returns as many outputs.
    fn teacher_forced(&self, inputs: &[f64], steps: usize) -> Result<Vec<f64>>;
}

impl Predictor for Model {
    fn teacher_forced(&self, inputs: &[f64], _steps: usize) -> Result<Vec<f64>> {
        Ok(self.rollout(&self.zero_state(), Drive::TeacherForced(inputs))?.outputs().to_vec())
    }
}

pub fn rmse(pred: &[f64], target: &[f64]) -> f64 {
    debug_assert_eq!(pred.len(), target.len());
    let sq: f64 = pred.iter().zip(target).map(|(p, t)| (p - t) * (p - t)).sum();
    (sq / pred.len() as f64).sqrt()
}

/// Per-sample RMSE of teacher-forced predictions on the noisy channel
/// against clean targets one step ahead.
pub fn open_loop_errors<P: Predictor>(model: &P, data: &Dataset, mode: Parallelism) -> Result<Vec<f64>> {
    let d = data.channels();
    let steps = data.steps() - 1;
    try_map_indexed(data.count(), mode, |i| {
        let pred = model.teacher_forced(&data.noisy(i)[..steps * d], steps)?;
        if pred.len() != steps * d {
            return Err(Error::contract(format!("predictor returned {} values, expected {}", pred.len(), steps * d)));
        }
        Ok(rmse(&pred, &data.clean(i)[d..]))
    })
}

/// Teacher-forced RMSE with `noise` applied to `data`, averaged over samples.
pub fn evaluate_open_loop<P: Predictor>(model: &P, data: &Dataset, noise: &NoiseSpec, mode: Parallelism) -> Result<f64> {
    if data.steps() < 2 {
        return Err(Error::validation("sequences need at least two steps to form targets"));
    }
    let noisy = data.clone().with_noise(noise)?;
    let errs = open_loop_errors(model, &noisy, mode)?;
    Ok(errs.iter().sum::<f64>() / errs.len() as f64)
}

/// `epoch,mse` CSV, one row per epoch, preceded by a config-hash comment.
pub fn write_loss_csv(path: &Path, history: &[f64], config_hash: &str) -> Result<()> {
    let mut s = format!("# config_hash={config_hash}\nepoch,mse\n");
    for (i, l) in history.iter().enumerate() {
        writeln!(s, "{},{l:e}", i + 1).unwrap();
    }
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, s)?;
    Ok(())
}
