//! Multiple superimposed oscillators: `sum_i a_i sin(f_i t + phi_i)`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_FREQUENCIES: [f64; 5] = [0.2, 0.311, 0.42, 0.51, 0.63];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MsoSpec {
    pub frequencies: Vec<f64>,
    /// Drawn from `U[0, 1]` per sample when absent.
    #[serde(default)]
    pub amplitudes: Option<Vec<f64>>,
    /// Drawn from `U[0, 2 pi)` per sample when absent.
    #[serde(default)]
    pub phases: Option<Vec<f64>>,
    pub steps: usize,
    pub seed: u64,
}

impl Default for MsoSpec {
    fn default() -> Self {
        MsoSpec { frequencies: DEFAULT_FREQUENCIES.to_vec(), amplitudes: None, phases: None, steps: 400, seed: 0 }
    }
}

impl MsoSpec {
    pub fn validate(&self) -> Result<()> {
        let n = self.frequencies.len();
        if n == 0 {
            return Err(Error::validation("MSO needs at least one frequency"));
        }
        if self.steps == 0 {
            return Err(Error::validation("MSO sequences need at least one step"));
        }
        if let Some(a) = &self.amplitudes {
            if a.len() != n {
                return Err(Error::validation(format!("{} amplitudes for {n} waves", a.len())));
            }
            if a.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(Error::validation("MSO amplitudes must lie in [0, 1]"));
            }
        }
        if let Some(p) = &self.phases {
            if p.len() != n {
                return Err(Error::validation(format!("{} phases for {n} waves", p.len())));
            }
        }
        Ok(())
    }
}

/// Concrete wave parameters of one sample.
#[derive(Clone, Debug, PartialEq)]
pub struct MsoWaves {
    pub frequencies: Vec<f64>,
    pub amplitudes: Vec<f64>,
    pub phases: Vec<f64>,
}

impl MsoWaves {
    pub fn draw<R: Rng + ?Sized>(spec: &MsoSpec, rng: &mut R) -> Self {
        let n = spec.frequencies.len();
        let amplitudes = match &spec.amplitudes {
            Some(a) => a.clone(),
            None => (0..n).map(|_| rng.random_range(0.0..=1.0)).collect(),
        };
        let phases = match &spec.phases {
            Some(p) => p.clone(),
            None => (0..n).map(|_| rng.random_range(0.0..std::f64::consts::TAU)).collect(),
        };
        MsoWaves { frequencies: spec.frequencies.clone(), amplitudes, phases }
    }

    pub fn value(&self, t: f64) -> f64 {
        self.frequencies
            .iter()
            .zip(&self.amplitudes)
            .zip(&self.phases)
            .map(|((f, a), p)| a * (f * t + p).sin())
            .sum()
    }

    /// Upper bound on `|value(t)|`.
    pub fn amplitude_bound(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.abs()).sum()
    }
}

/// One clean MSO sequence of `spec.steps` values at integer times `0..steps`.
pub fn gen_mso<R: Rng + ?Sized>(spec: &MsoSpec, rng: &mut R) -> Result<Vec<f64>> {
    spec.validate()?;
    let waves = MsoWaves::draw(spec, rng);
    Ok((0..spec.steps).map(|t| waves.value(t as f64)).collect())
}
