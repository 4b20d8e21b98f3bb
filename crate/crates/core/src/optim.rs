//! Bias-corrected Adam, used for both weight training and seed-state tuning.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamConfig {
    pub rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    #[serde(default = "default_eps")]
    pub eps: f64,
}

fn default_eps() -> f64 {
    1e-8
}

impl Default for AdamConfig {
    /// `eta = 0.001, beta1 = 0.9, beta2 = 0.999`, the training configuration.
    fn default() -> Self {
        AdamConfig { rate: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

impl AdamConfig {
    pub fn new(rate: f64, beta1: f64, beta2: f64) -> Result<Self> {
        let cfg = AdamConfig { rate, beta1, beta2, eps: 1e-8 };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rate > 0.0 && self.rate.is_finite()) {
            return Err(Error::config(format!("Adam rate must be positive, got {}", self.rate)));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::config(format!("Adam {name} must lie in [0, 1), got {b}")));
            }
        }
        if !(self.eps > 0.0) {
            return Err(Error::config(format!("Adam eps must be positive, got {}", self.eps)));
        }
        Ok(())
    }
}

/// Moment estimates for one optimized variable.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        AdamState { m: vec![0.0; len], v: vec![0.0; len], t: 0 }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn first_moment(&self) -> &[f64] {
        &self.m
    }

    pub fn second_moment(&self) -> &[f64] {
        &self.v
    }

    pub fn reset(&mut self) {
        self.m.fill(0.0);
        self.v.fill(0.0);
        self.t = 0;
    }

    /// One Adam update of `variable` in place.
    pub fn step(&mut self, cfg: &AdamConfig, variable: &mut [f64], grad: &[f64]) -> Result<()> {
        if variable.len() != self.m.len() || grad.len() != self.m.len() {
            return Err(Error::contract(format!(
                "Adam state holds {} entries, variable {} and gradient {}",
                self.m.len(),
                variable.len(),
                grad.len()
            )));
        }
        if let Some(i) = grad.iter().position(|g| !g.is_finite()) {
            return Err(Error::Numeric { step: self.t as usize, what: format!("gradient entry {i} is {}", grad[i]) });
        }
        self.t += 1;
        let t = self.t as i32;
        let c1 = 1.0 - cfg.beta1.powi(t);
        let c2 = 1.0 - cfg.beta2.powi(t);
        for ((x, &g), (m, v)) in variable.iter_mut().zip(grad).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
            *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *x -= cfg.rate * m_hat / (v_hat.sqrt() + cfg.eps);
        }
        Ok(())
    }
}

/// Functional form: returns the updated variable and state.
pub fn adam_step(state: &AdamState, cfg: &AdamConfig, variable: &[f64], grad: &[f64]) -> Result<(Vec<f64>, AdamState)> {
    let mut state = state.clone();
    let mut var = variable.to_vec();
    state.step(cfg, &mut var, grad)?;
    Ok((var, state))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zero_gradient_leaves_variable_unchanged() {
        let (x, st) = adam_step(&AdamState::new(3), &AdamConfig::default(), &[1.0, -2.0, 3.0], &[0.0; 3]).unwrap();
        assert_eq!(x, vec![1.0, -2.0, 3.0]);
        assert_eq!(st.steps(), 1);
    }

    #[test]
    fn first_step_is_rate_times_sign() {
        // m_hat = g and v_hat = g^2 at t = 1, so the step is rate * g / (|g| + eps).
        let cfg = AdamConfig::default();
        let g = [1e-3, -5.0, 250.0, -1e6];
        let (x, _) = adam_step(&AdamState::new(4), &cfg, &[0.0; 4], &g).unwrap();
        for (xi, gi) in x.iter().zip(g) {
            let expect = -cfg.rate * gi.signum();
            assert!((xi - expect).abs() <= cfg.rate * cfg.eps / gi.abs() + 1e-18, "{xi} vs {expect}");
        }
    }

    #[test]
    fn training_defaults() {
        let cfg = AdamConfig::default();
        assert_eq!((cfg.rate, cfg.beta1, cfg.beta2, cfg.eps), (0.001, 0.9, 0.999, 1e-8));
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn invalid_configs_rejected() {
        assert!(AdamConfig::new(0.0, 0.9, 0.999).is_err());
        assert!(AdamConfig::new(1e-3, 1.0, 0.999).is_err());
        assert!(AdamConfig::new(1e-3, 0.9, -0.1).is_err());
        assert!(AdamConfig::new(1e-3, 0.0, 0.0).is_ok());
    }

    #[test]
    fn shape_and_finiteness_errors() {
        let mut st = AdamState::new(2);
        let cfg = AdamConfig::default();
        assert!(matches!(st.step(&cfg, &mut [0.0; 3], &[0.0; 3]), Err(Error::Contract(_))));
        assert!(matches!(st.step(&cfg, &mut [0.0; 2], &[f64::NAN, 0.0]), Err(Error::Numeric { .. })));
        assert_eq!(st.steps(), 0);
    }

    #[test]
    fn descends_a_convex_quadratic() {
        // f(x) = sum_i k_i (x_i - c_i)^2 in 10 dims
        let k: Vec<f64> = (0..10).map(|i| 0.5 + i as f64 * 0.3).collect();
        let c: Vec<f64> = (0..10).map(|i| (i as f64 - 4.5) * 0.4).collect();
        let f = |x: &[f64]| -> f64 { x.iter().zip(&k).zip(&c).map(|((x, k), c)| k * (x - c).powi(2)).sum() };
        let mut x = vec![0.0; 10];
        let f0 = f(&x);
        let cfg = AdamConfig { rate: 0.01, ..AdamConfig::default() };
        let mut st = AdamState::new(10);
        for _ in 0..500 {
            let g: Vec<f64> = x.iter().zip(&k).zip(&c).map(|((x, k), c)| 2.0 * k * (x - c)).collect();
            st.step(&cfg, &mut x, &g).unwrap();
        }
        assert!(f(&x) <= 0.01 * f0, "objective {} from {}", f(&x), f0);
    }

    proptest! {
        #[test]
        fn first_step_magnitude_bounded_by_rate(g in prop::collection::vec(-1e6f64..1e6, 1..20), rate in 1e-6f64..1.0) {
            let cfg = AdamConfig { rate, ..AdamConfig::default() };
            let x0 = vec![0.0; g.len()];
            let (x, _) = adam_step(&AdamState::new(g.len()), &cfg, &x0, &g).unwrap();
            for xi in &x {
                prop_assert!(xi.abs() <= rate * (1.0 + 1e-12));
            }
        }

        #[test]
        fn first_step_is_scale_invariant(g in prop::collection::vec(1e-3f64..1e3, 1..10), s in 1e-2f64..1e2) {
            let cfg = AdamConfig::default();
            let x0 = vec![0.5; g.len()];
            let scaled: Vec<f64> = g.iter().map(|v| v * s).collect();
            let (a, _) = adam_step(&AdamState::new(g.len()), &cfg, &x0, &g).unwrap();
            let (b, _) = adam_step(&AdamState::new(g.len()), &cfg, &x0, &scaled).unwrap();
            for (x, y) in a.iter().zip(&b) {
                // identical up to the eps term in the denominator
                prop_assert!((x - y).abs() <= 1e-7 * cfg.rate);
            }
        }
    }
}
