//! Test-only oracles, independent of the code paths they check.
#![allow(dead_code)]

use atune_core::model::{Drive, GridModelParams, HiddenState, LstmParams, Model};
use atune_core::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FD_STEP: f64 = 1e-5;

/// Scalar loss `sum_t w_t . y_t` of a rollout, so its output gradient is `w`.
pub fn weighted_loss(model: &Model, seed: &HiddenState, inputs: &[f64], closed_steps: Option<usize>, w: &[f64]) -> f64 {
    let trace = match closed_steps {
        Some(steps) => model.rollout(seed, Drive::ClosedLoop { first_input: inputs, steps }),
        None => model.rollout(seed, Drive::TeacherForced(inputs)),
    }
    .expect("rollout");
    trace.outputs().iter().zip(w).map(|(y, w)| y * w).sum()
}

/// Central difference of `f` around `x[i]`.
pub fn central_diff(x: &mut [f64], i: usize, mut f: impl FnMut(&[f64]) -> f64) -> f64 {
    let orig = x[i];
    x[i] = orig + FD_STEP;
    let up = f(x);
    x[i] = orig - FD_STEP;
    let down = f(x);
    x[i] = orig;
    (up - down) / (2.0 * FD_STEP)
}

/// Relative error with a small absolute floor so exact zeros compare sanely.
pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-4)
}

#[derive(Debug, Default)]
pub struct FdReport {
    pub checked: usize,
    pub worst: f64,
}

impl FdReport {
    fn record(&mut self, analytic: f64, numeric: f64) {
        self.checked += 1;
        self.worst = self.worst.max(rel_err(analytic, numeric));
    }
}

pub struct Instance {
    pub model: Model,
    pub seed: HiddenState,
    pub inputs: Vec<f64>,
    pub closed_steps: Option<usize>,
    pub weights: Vec<f64>,
}

pub fn random_instance(rng: &mut ChaCha8Rng, grid: bool, closed: bool, hidden: usize, steps: usize) -> Instance {
    let model = if grid {
        let mut g = GridModelParams::init_uniform(3, 3, hidden, rng);
        // widen the weights a little so gates leave their linear regime
        for t in g.cell_mut().tensors_mut() {
            t.scale(1.5);
        }
        Model::Grid(g)
    } else {
        let d = if closed { rng.random_range(1..=3) } else { rng.random_range(1..=4) };
        let o = if closed { d } else { rng.random_range(1..=3) };
        let mut p = LstmParams::init_uniform(d, hidden, o, rng);
        for t in p.tensors_mut() {
            t.scale(1.5);
        }
        Model::Lstm(p)
    };
    let s = model.state_size();
    let mut v = |n: usize, a: f64| -> Vec<f64> { (0..n).map(|_| rng.random_range(-a..a)).collect() };
    let seed = HiddenState::new(Tensor::vector(v(s, 0.5)).unwrap(), Tensor::vector(v(s, 0.8)).unwrap()).unwrap();
    let d = model.input_size();
    let inputs = if closed { v(d, 1.0) } else { v(d * steps, 1.0) };
    let weights = v(model.output_size() * steps, 1.0);
    Instance { model, seed, inputs, closed_steps: closed.then_some(steps), weights }
}

/// Compare analytic gradients of `inst` against central differences for every
/// parameter, seed entry and independent input.
pub fn check_gradients(inst: &Instance) -> FdReport {
    let mut report = FdReport::default();
    let trace = match inst.closed_steps {
        Some(steps) => inst.model.rollout(&inst.seed, Drive::ClosedLoop { first_input: &inst.inputs, steps }),
        None => inst.model.rollout(&inst.seed, Drive::TeacherForced(&inst.inputs)),
    }
    .unwrap();
    let grads = inst.model.backward(&trace, &inst.weights).unwrap();

    for which in 0..3 {
        let n = inst.model.cell().tensors()[which].len();
        for i in 0..n {
            let mut m = inst.model.clone();
            let mut values = m.cell().tensors()[which].data().to_vec();
            let numeric = central_diff(&mut values, i, |vals| {
                m.cell_mut().tensors_mut()[which].data_mut().copy_from_slice(vals);
                weighted_loss(&m, &inst.seed, &inst.inputs, inst.closed_steps, &inst.weights)
            });
            report.record(grads.params.tensors()[which].data()[i], numeric);
        }
    }

    let mut h = inst.seed.h.data().to_vec();
    for i in 0..h.len() {
        let c = inst.seed.c.clone();
        let numeric = central_diff(&mut h, i, |hv| {
            let s = HiddenState::new(Tensor::vector(hv.to_vec()).unwrap(), c.clone()).unwrap();
            weighted_loss(&inst.model, &s, &inst.inputs, inst.closed_steps, &inst.weights)
        });
        report.record(grads.seed.h.data()[i], numeric);
    }
    let mut c = inst.seed.c.data().to_vec();
    for i in 0..c.len() {
        let h = inst.seed.h.clone();
        let numeric = central_diff(&mut c, i, |cv| {
            let s = HiddenState::new(h.clone(), Tensor::vector(cv.to_vec()).unwrap()).unwrap();
            weighted_loss(&inst.model, &s, &inst.inputs, inst.closed_steps, &inst.weights)
        });
        report.record(grads.seed.c.data()[i], numeric);
    }

    let mut x = inst.inputs.clone();
    for i in 0..x.len() {
        let numeric = central_diff(&mut x, i, |xv| weighted_loss(&inst.model, &inst.seed, xv, inst.closed_steps, &inst.weights));
        report.record(grads.inputs[i], numeric);
    }
    report
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Print one acceptance line and return whether it passed.
pub fn verdict(id: &str, pass: bool, detail: impl std::fmt::Display) -> bool {
    println!("[{}] criterion {id}: {detail}", if pass { "PASS" } else { "FAIL" });
    pass
}
