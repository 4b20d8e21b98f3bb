//! Reference Active Tuning hyperparameters per experiment, training noise
//! and signal noise.

use crate::datagen::Experiment;
use crate::optim::AdamConfig;

use super::TuningConfig;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Preset {
    pub experiment: Experiment,
    pub training_noise: f64,
    pub signal_noise: f64,
    pub horizon: usize,
    pub cycles: usize,
    pub rate: f64,
    pub beta1: f64,
    pub beta2: f64,
}

#[allow(clippy::too_many_arguments)]
const fn p(experiment: Experiment, training_noise: f64, signal_noise: f64, horizon: usize, cycles: usize, rate: f64, beta1: f64, beta2: f64) -> Preset {
    Preset { experiment, training_noise, signal_noise, horizon, cycles, rate, beta1, beta2 }
}

use Experiment::{Mso, Pendulum, Wave};

#[rustfmt::skip]
pub const PRESETS: [Preset; 24] = [
    p(Mso, 0.0, 0.1, 8, 10, 0.005, 0.9, 0.99),
    p(Mso, 0.0, 0.2, 8, 10, 0.005, 0.9, 0.99),
    p(Mso, 0.0, 0.5, 14, 10, 0.006, 0.9, 0.99),
    p(Mso, 0.0, 1.0, 16, 10, 0.004, 0.5, 0.99),
    p(Mso, 0.05, 0.1, 8, 10, 0.008, 0.9, 0.99),
    p(Mso, 0.05, 0.2, 8, 12, 0.005, 0.5, 0.999),
    p(Mso, 0.05, 0.5, 14, 10, 0.007, 0.9, 0.99),
    p(Mso, 0.05, 1.0, 16, 10, 0.006, 0.5, 0.9),
    p(Pendulum, 0.0, 0.1, 8, 10, 0.005, 0.9, 0.99),
    p(Pendulum, 0.0, 0.2, 8, 10, 0.005, 0.9, 0.99),
    p(Pendulum, 0.0, 0.5, 8, 10, 0.004, 0.5, 0.99),
    p(Pendulum, 0.0, 1.0, 12, 10, 0.004, 0.5, 0.9),
    p(Pendulum, 0.05, 0.1, 8, 10, 0.008, 0.9, 0.99),
    p(Pendulum, 0.05, 0.2, 8, 10, 0.005, 0.5, 0.99),
    p(Pendulum, 0.05, 0.5, 8, 10, 0.004, 0.5, 0.99),
    p(Pendulum, 0.05, 1.0, 12, 10, 0.005, 0.5, 0.9),
    p(Wave, 0.0, 0.1, 7, 10, 0.01, 0.9, 0.999),
    p(Wave, 0.0, 0.2, 5, 17, 6e-5, 0.0, 0.999),
    p(Wave, 0.0, 0.5, 4, 20, 8e-5, 0.0, 0.999),
    p(Wave, 0.0, 1.0, 7, 30, 4e-5, 0.0, 0.999),
    p(Wave, 0.05, 0.1, 8, 12, 0.012, 0.9, 0.999),
    p(Wave, 0.05, 0.2, 5, 17, 1e-4, 0.0, 0.999),
    p(Wave, 0.05, 0.5, 4, 20, 1e-4, 0.0, 0.999),
    p(Wave, 0.05, 1.0, 7, 30, 5e-5, 0.0, 0.999),
];

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() < 1e-9
}

/// Registered hyperparameters, if any.
pub fn preset(experiment: Experiment, training_noise: f64, signal_noise: f64) -> Option<&'static Preset> {
    PRESETS
        .iter()
        .find(|p| p.experiment == experiment && close(p.training_noise, training_noise) && close(p.signal_noise, signal_noise))
}

impl Preset {
    pub fn key(&self) -> String {
        format!("{}:{}:{}", self.experiment, self.training_noise, self.signal_noise)
    }

    pub fn config(&self) -> TuningConfig {
        let adam = AdamConfig { rate: self.rate, beta1: self.beta1, beta2: self.beta2, ..AdamConfig::default() };
        TuningConfig::new(self.horizon, self.cycles, adam)
    }
}
