//! Active Tuning: at every world step, optimize the hidden state at the left
//! edge of a short window so that the model's closed-loop rollout over the
//! window reproduces the buffered observations.
//!
//! The rollout never consumes observations except the seed input, so noise
//! reaches the output only through the loss gradient.

pub mod presets;

use std::collections::VecDeque;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Drive, ForwardTrace, HiddenState, Model};
use crate::optim::{AdamConfig, AdamState};
use crate::tensor::Tensor;

pub use presets::{preset, Preset, PRESETS};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TuningTarget {
    /// Hidden outputs only; cell states follow through the rollouts.
    #[default]
    Hidden,
    HiddenAndCell,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TuningConfig {
    /// Window length `R`.
    pub horizon: usize,
    /// Tuning cycles `C` per world step.
    pub cycles: usize,
    pub adam: AdamConfig,
    #[serde(default)]
    pub target: TuningTarget,
    #[serde(default = "default_init_std")]
    pub init_std: f64,
    /// Also optimize the input fed at the window's first step.
    #[serde(default)]
    pub tune_seed_input: bool,
    /// Keep optimizer moments across world steps instead of resetting them.
    #[serde(default)]
    pub carry_moments: bool,
}

fn default_init_std() -> f64 {
    0.1
}

impl TuningConfig {
    pub fn new(horizon: usize, cycles: usize, adam: AdamConfig) -> Self {
        TuningConfig {
            horizon,
            cycles,
            adam,
            target: TuningTarget::Hidden,
            init_std: 0.1,
            tune_seed_input: false,
            carry_moments: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::config("tuning horizon must be at least 1"));
        }
        if !(self.init_std >= 0.0 && self.init_std.is_finite()) {
            return Err(Error::config(format!("state init std must be non-negative, got {}", self.init_std)));
        }
        self.adam.validate()
    }

    fn variable_len(&self, state: usize, input: usize) -> usize {
        let s = match self.target {
            TuningTarget::Hidden => state,
            TuningTarget::HiddenAndCell => 2 * state,
        };
        s + if self.tune_seed_input { input } else { 0 }
    }
}

/// Result of one world step.
#[derive(Clone, Debug, PartialEq)]
pub struct StepOutput {
    /// Filtered estimate of the current observation.
    pub output: Vec<f64>,
    /// State after the current step, for forecasting.
    pub state: HiddenState,
    /// Window loss before the first and after the last tuning cycle.
    pub loss_before: f64,
    pub loss_after: f64,
}

/// Per-stream tuning state.
#[derive(Clone, Debug)]
pub struct TuningWindow {
    dim: usize,
    observations: VecDeque<Vec<f64>>,
    seed: HiddenState,
    seed_input: Option<Vec<f64>>,
    trace: Option<ForwardTrace>,
    adam: AdamState,
    seen: usize,
}

/// Fresh window with a seed state drawn from `N(0, init_std^2)`.
pub fn init_stream<R: Rng + ?Sized>(cfg: &TuningConfig, model: &Model, rng: &mut R) -> Result<TuningWindow> {
    cfg.validate()?;
    let n = model.state_size();
    let mut draw = || -> Result<Tensor> {
        if cfg.init_std == 0.0 {
            return Ok(Tensor::zeros(vec![n]));
        }
        let normal = Normal::new(0.0, cfg.init_std).map_err(|e| Error::config(e.to_string()))?;
        Tensor::vector((0..n).map(|_| normal.sample(rng)).collect())
    };
    let h = draw()?;
    let c = draw()?;
    Ok(TuningWindow {
        dim: model.input_size(),
        observations: VecDeque::with_capacity(cfg.horizon + 1),
        seed: HiddenState::new(h, c)?,
        seed_input: None,
        trace: None,
        adam: AdamState::new(cfg.variable_len(n, model.input_size())),
        seen: 0,
    })
}

impl TuningWindow {
    /// Buffered observations, `min(steps seen, R)`.
    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn steps_seen(&self) -> usize {
        self.seen
    }

    pub fn seed_state(&self) -> &HiddenState {
        &self.seed
    }

    pub fn seed_input(&self) -> Option<&[f64]> {
        self.seed_input.as_deref()
    }

    /// Predictions of the latest rollout, one per buffered observation.
    pub fn predictions(&self) -> &[f64] {
        self.trace.as_ref().map(|t| t.outputs()).unwrap_or(&[])
    }

    pub fn optimizer(&self) -> &AdamState {
        &self.adam
    }

    fn rollout(&self, model: &Model) -> Result<ForwardTrace> {
        let first = self.seed_input.as_deref().ok_or_else(|| Error::contract("window holds no observation yet"))?;
        model.rollout(&self.seed, Drive::ClosedLoop { first_input: first, steps: self.observations.len() })
    }

    /// Mean squared error over the window and its gradient with respect to
    /// the rollout outputs.
    fn loss(&self, trace: &ForwardTrace) -> (f64, Vec<f64>) {
        let pred = trace.outputs();
        let n = pred.len() as f64;
        let mut sq = 0.0;
        let mut grad = Vec::with_capacity(pred.len());
        for (p, o) in pred.iter().zip(self.observations.iter().flatten()) {
            let e = p - o;
            sq += e * e;
            grad.push(2.0 * e / n);
        }
        (sq / n, grad)
    }

    /// Current window loss of the latest rollout.
    pub fn window_loss(&self) -> Option<f64> {
        self.trace.as_ref().map(|t| self.loss(t).0)
    }

    fn gather(&self, cfg: &TuningConfig) -> Vec<f64> {
        let mut v = self.seed.h.data().to_vec();
        if cfg.target == TuningTarget::HiddenAndCell {
            v.extend_from_slice(self.seed.c.data());
        }
        if cfg.tune_seed_input {
            v.extend_from_slice(self.seed_input.as_deref().unwrap_or(&[]));
        }
        v
    }

    fn scatter(&mut self, cfg: &TuningConfig, v: &[f64]) {
        let n = self.seed.h.len();
        self.seed.h.data_mut().copy_from_slice(&v[..n]);
        let mut off = n;
        if cfg.target == TuningTarget::HiddenAndCell {
            self.seed.c.data_mut().copy_from_slice(&v[n..2 * n]);
            off = 2 * n;
        }
        if cfg.tune_seed_input {
            if let Some(x) = self.seed_input.as_mut() {
                let n = x.len();
                x.copy_from_slice(&v[off..off + n]);
            }
        }
    }
}

/// One tuning cycle: gradient of the window loss back to the seed, one
/// Adam step, re-rollout. Returns the loss before the update.
pub fn tuning_cycle(window: &mut TuningWindow, model: &Model, cfg: &TuningConfig) -> Result<f64> {
    if window.is_empty() {
        return Err(Error::contract("tuning needs at least one buffered observation"));
    }
    let trace = match window.trace.take() {
        Some(t) if t.len() == window.len() => t,
        _ => window.rollout(model)?,
    };
    let (loss, dy) = window.loss(&trace);
    if !loss.is_finite() {
        return Err(Error::Numeric { step: window.seen, what: format!("window loss {loss}") });
    }
    let sg = model.seed_gradients(&trace, &dy)?;
    let mut grad = sg.seed.h.data().to_vec();
    if cfg.target == TuningTarget::HiddenAndCell {
        grad.extend_from_slice(sg.seed.c.data());
    }
    if cfg.tune_seed_input {
        grad.extend_from_slice(&sg.inputs[..window.dim]);
    }
    let mut var = window.gather(cfg);
    window.adam.step(&cfg.adam, &mut var, &grad).map_err(|e| match e {
        Error::Numeric { what, .. } => Error::Numeric { step: window.seen, what },
        other => other,
    })?;
    window.scatter(cfg, &var);
    window.trace = Some(window.rollout(model)?);
    Ok(loss)
}

/// Advance the stream by one observation and return the filtered output.
pub fn step_stream(window: &mut TuningWindow, model: &Model, cfg: &TuningConfig, observation: &[f64]) -> Result<StepOutput> {
    if observation.len() != window.dim {
        return Err(Error::contract(format!(
            "observation has {} values, model expects {}",
            observation.len(),
            window.dim
        )));
    }
    if window.seed_input.is_none() {
        window.seed_input = Some(observation.to_vec());
    }
    window.observations.push_back(observation.to_vec());
    if window.observations.len() > cfg.horizon {
        // Shift the window: the state and prediction after its first step
        // become the new seed.
        let prev = window.trace.as_ref().ok_or_else(|| Error::contract("window shifted before any rollout"))?;
        window.seed = prev.state(1);
        window.seed_input = Some(prev.output(0).to_vec());
        window.observations.pop_front();
    }
    window.seen += 1;
    if !cfg.carry_moments {
        window.adam.reset();
    }
    window.trace = Some(window.rollout(model)?);
    let loss_before = window.window_loss().unwrap_or(f64::NAN);
    for _ in 0..cfg.cycles {
        tuning_cycle(window, model, cfg)?;
    }
    let trace = window.trace.as_ref().expect("rollout present");
    let loss_after = window.loss(trace).0;
    Ok(StepOutput {
        output: trace.output(trace.len() - 1).to_vec(),
        state: trace.final_state(),
        loss_before,
        loss_after,
    })
}

/// Closed-loop continuation of `steps` predictions past the newest
/// observation. Leaves the window untouched.
pub fn forecast(window: &TuningWindow, model: &Model, steps: usize) -> Result<Vec<f64>> {
    if steps == 0 {
        return Ok(Vec::new());
    }
    let trace = window.trace.as_ref().ok_or_else(|| Error::contract("forecast needs at least one observed step"))?;
    let last = trace.output(trace.len() - 1);
    Ok(model.rollout(&trace.final_state(), Drive::ClosedLoop { first_input: last, steps })?.outputs().to_vec())
}

/// Filtered outputs and per-step losses of a whole stream.
#[derive(Clone, Debug, PartialEq)]
pub struct StreamResult {
    /// Step-major, one output per observation.
    pub outputs: Vec<f64>,
    pub loss_before: Vec<f64>,
    pub loss_after: Vec<f64>,
}

/// Run Active Tuning over `observations` (step-major).
pub fn filter_stream<R: Rng + ?Sized>(model: &Model, cfg: &TuningConfig, observations: &[f64], rng: &mut R) -> Result<StreamResult> {
    let d = model.input_size();
    if observations.len() % d != 0 {
        return Err(Error::contract(format!("{} values do not form {d}-wide steps", observations.len())));
    }
    let mut window = init_stream(cfg, model, rng)?;
    let steps = observations.len() / d;
    let mut out = StreamResult {
        outputs: Vec::with_capacity(observations.len()),
        loss_before: Vec::with_capacity(steps),
        loss_after: Vec::with_capacity(steps),
    };
    for obs in observations.chunks(d) {
        let s = step_stream(&mut window, model, cfg, obs)?;
        out.outputs.extend_from_slice(&s.output);
        out.loss_before.push(s.loss_before);
        out.loss_after.push(s.loss_after);
    }
    Ok(out)
}

#[cfg(test)]
mod tests;
