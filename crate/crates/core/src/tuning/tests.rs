use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::model::{GridModelParams, LstmParams};

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_lstm(d: usize, h: usize, seed: u64) -> Model {
    let mut p = LstmParams::init_uniform(d, h, d, &mut rng(seed));
    p.scale(2.0);
    Model::Lstm(p)
}

fn signal(steps: usize, d: usize, seed: u64) -> Vec<f64> {
    let mut r = rng(seed);
    (0..steps * d).map(|i| (i as f64 * 0.3).sin() + r.random_range(-0.3..0.3)).collect()
}

fn cfg(horizon: usize, cycles: usize, rate: f64) -> TuningConfig {
    TuningConfig::new(horizon, cycles, AdamConfig { rate, ..AdamConfig::default() })
}

#[test]
fn zero_cycles_match_plain_closed_loop_rollout() {
    let model = random_lstm(2, 6, 1);
    let obs = signal(60, 2, 2);
    let c = cfg(5, 0, 0.01);
    let out = filter_stream(&model, &c, &obs, &mut rng(9)).unwrap();
    let seed = init_stream(&c, &model, &mut rng(9)).unwrap().seed_state().clone();
    let plain = model.rollout(&seed, Drive::ClosedLoop { first_input: &obs[..2], steps: 60 }).unwrap();
    assert_eq!(out.outputs, plain.outputs());
}

#[test]
fn tiny_rate_never_increases_window_loss() {
    let model = random_lstm(1, 8, 3);
    let obs = signal(1000, 1, 4);
    let out = filter_stream(&model, &cfg(8, 1, 1e-6), &obs, &mut rng(1)).unwrap();
    for (t, (b, a)) in out.loss_before.iter().zip(&out.loss_after).enumerate() {
        assert!(a <= b, "step {t}: {b} -> {a}");
    }
}

#[test]
fn window_discipline() {
    let model = random_lstm(1, 5, 5);
    let obs = signal(30, 1, 6);
    let c = cfg(7, 0, 0.01);
    let mut w = init_stream(&c, &model, &mut rng(2)).unwrap();
    assert_eq!(w.len(), 0);
    let initial = w.seed_state().clone();
    let plain = model.rollout(&initial, Drive::ClosedLoop { first_input: &obs[..1], steps: 30 }).unwrap();
    for (t, o) in obs.chunks(1).enumerate() {
        step_stream(&mut w, &model, &c, o).unwrap();
        let seen = t + 1;
        assert_eq!(w.len(), seen.min(7));
        assert_eq!(w.predictions().len(), w.len());
        // the seed sits exactly `len` steps before the newest observation
        assert_eq!(w.seed_state(), &plain.state(seen - w.len()));
    }
}

#[test]
fn one_output_per_observation() {
    let model = random_lstm(3, 4, 7);
    let obs = signal(25, 3, 8);
    let out = filter_stream(&model, &cfg(4, 3, 0.01), &obs, &mut rng(0)).unwrap();
    assert_eq!(out.outputs.len(), obs.len());
    assert_eq!(out.loss_after.len(), 25);
}

#[test]
fn zero_model_outputs_zero() {
    let model = Model::Lstm(LstmParams::zeros(1, 6, 1));
    let obs = signal(50, 1, 9);
    let out = filter_stream(&model, &cfg(8, 10, 0.05), &obs, &mut rng(1)).unwrap();
    assert!(out.outputs.iter().all(|&v| v == 0.0));
}

#[test]
fn seed_initialization_std() {
    let model = random_lstm(1, 50, 1);
    let c = TuningConfig::new(4, 1, AdamConfig::default());
    let mut r = rng(11);
    let mut vals = Vec::new();
    for _ in 0..200 {
        let w = init_stream(&c, &model, &mut r).unwrap();
        vals.extend_from_slice(w.seed_state().h.data());
        vals.extend_from_slice(w.seed_state().c.data());
    }
    let n = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / n;
    let std = (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    assert!((0.095..=0.105).contains(&std), "{std}");

    let zero = TuningConfig { init_std: 0.0, ..c };
    let w = init_stream(&zero, &model, &mut r).unwrap();
    assert_eq!(w.seed_state(), &HiddenState::zeros(50));
    assert!(w.is_empty());
}

#[test]
fn forecast_is_pure_and_continues_the_rollout() {
    let model = random_lstm(2, 5, 12);
    let obs = signal(20, 2, 13);
    let c = cfg(6, 0, 0.01);
    let mut w = init_stream(&c, &model, &mut rng(3)).unwrap();
    assert!(forecast(&w, &model, 0).unwrap().is_empty());
    for o in obs.chunks(2) {
        step_stream(&mut w, &model, &c, o).unwrap();
    }
    let a = forecast(&w, &model, 15).unwrap();
    let b = forecast(&w, &model, 15).unwrap();
    assert_eq!(a, b);
    let seed = init_stream(&c, &model, &mut rng(3)).unwrap().seed_state().clone();
    let plain = model.rollout(&seed, Drive::ClosedLoop { first_input: &obs[..2], steps: 35 }).unwrap();
    assert_eq!(a, &plain.outputs()[40..]);
}

#[test]
fn observations_only_act_through_gradients() {
    let model = random_lstm(1, 6, 14);
    let mut a = signal(40, 1, 15);
    let c = cfg(5, 0, 0.01);
    let first = filter_stream(&model, &c, &a, &mut rng(4)).unwrap();
    for v in a.iter_mut().skip(1) {
        *v += 10.0;
    }
    let second = filter_stream(&model, &c, &a, &mut rng(4)).unwrap();
    assert_eq!(first.outputs, second.outputs);
}

#[test]
fn tuning_reduces_window_loss_on_average() {
    let model = random_lstm(1, 8, 16);
    let obs = signal(200, 1, 17);
    for target in [TuningTarget::Hidden, TuningTarget::HiddenAndCell] {
        let c = TuningConfig { target, tune_seed_input: target == TuningTarget::HiddenAndCell, ..cfg(8, 10, 0.05) };
        let out = filter_stream(&model, &c, &obs, &mut rng(5)).unwrap();
        let before: f64 = out.loss_before.iter().sum();
        let after: f64 = out.loss_after.iter().sum();
        assert!(after < before, "{target:?}: {before} -> {after}");
    }
}

#[test]
fn grid_models_tune_all_cells_jointly() {
    let mut p = GridModelParams::init_uniform(3, 3, 4, &mut rng(18));
    p.cell_mut().scale(2.0);
    let model = Model::Grid(p);
    let obs = signal(30, 9, 19);
    let c = cfg(4, 5, 0.02);
    let mut w = init_stream(&c, &model, &mut rng(6)).unwrap();
    assert_eq!(w.seed_state().h.len(), 36);
    let mut improved = 0;
    for o in obs.chunks(9) {
        let s = step_stream(&mut w, &model, &c, o).unwrap();
        assert_eq!(s.output.len(), 9);
        improved += (s.loss_after < s.loss_before) as usize;
    }
    assert!(improved > 20);
}

#[test]
fn deterministic_and_validated() {
    let model = random_lstm(1, 6, 20);
    let obs = signal(50, 1, 21);
    let c = cfg(6, 4, 0.02);
    let a = filter_stream(&model, &c, &obs, &mut rng(7)).unwrap();
    let b = filter_stream(&model, &c, &obs, &mut rng(7)).unwrap();
    assert_eq!(a, b);
    let mut w = init_stream(&c, &model, &mut rng(7)).unwrap();
    assert!(matches!(step_stream(&mut w, &model, &c, &[1.0, 2.0]), Err(Error::Contract(_))));
    assert!(matches!(tuning_cycle(&mut w, &model, &c), Err(Error::Contract(_))));
    assert!(init_stream(&cfg(0, 1, 0.01), &model, &mut rng(7)).is_err());
}

#[test]
fn carried_moments_persist_across_steps() {
    let model = random_lstm(1, 4, 22);
    let obs = signal(10, 1, 23);
    let c = TuningConfig { carry_moments: true, ..cfg(4, 2, 0.01) };
    let mut w = init_stream(&c, &model, &mut rng(8)).unwrap();
    for o in obs.chunks(1) {
        step_stream(&mut w, &model, &c, o).unwrap();
    }
    assert_eq!(w.optimizer().steps(), 20);
    let reset = cfg(4, 2, 0.01);
    let mut w = init_stream(&reset, &model, &mut rng(8)).unwrap();
    for o in obs.chunks(1) {
        step_stream(&mut w, &model, &reset, o).unwrap();
    }
    assert_eq!(w.optimizer().steps(), 2);
}
