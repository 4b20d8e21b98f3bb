//! Observation noise.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Noise ratios models are trained on.
pub const TRAINING_NOISE_GRID: [f64; 6] = [0.0, 0.05, 0.1, 0.2, 0.5, 1.0];

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    #[default]
    Gaussian,
    SaltAndPepper,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    #[serde(default)]
    pub kind: NoiseKind,
    /// Gaussian: std relative to the clean signal std. Salt and pepper:
    /// fraction of values replaced, half by the minimum and half by the maximum.
    pub ratio: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn gaussian(ratio: f64, seed: u64) -> Self {
        NoiseSpec { kind: NoiseKind::Gaussian, ratio, seed }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.ratio >= 0.0 && self.ratio.is_finite()) {
            return Err(Error::validation(format!("noise ratio must be non-negative, got {}", self.ratio)));
        }
        if self.kind == NoiseKind::SaltAndPepper && self.ratio > 1.0 {
            return Err(Error::validation("salt-and-pepper ratio cannot exceed 1"));
        }
        Ok(())
    }
}

/// Summary statistics of the clean values a noise level is measured against.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SignalStats {
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

impl SignalStats {
    pub fn of(values: &[f64]) -> Self {
        if values.is_empty() {
            return SignalStats { std: 0.0, min: 0.0, max: 0.0 };
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let (min, max) = values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        SignalStats { std: var.sqrt(), min, max }
    }
}

/// Noisy copy of `clean` using `stats` as the reference signal.
pub fn corrupt(clean: &[f64], spec: &NoiseSpec, stats: &SignalStats) -> Result<Vec<f64>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut out = clean.to_vec();
    if spec.ratio == 0.0 {
        return Ok(out);
    }
    match spec.kind {
        NoiseKind::Gaussian => {
            let normal = Normal::new(0.0, spec.ratio * stats.std)
                .map_err(|e| Error::validation(format!("bad noise distribution: {e}")))?;
            for v in &mut out {
                *v += normal.sample(&mut rng);
            }
        }
        NoiseKind::SaltAndPepper => {
            let half = spec.ratio / 2.0;
            for v in &mut out {
                let u: f64 = rng.random();
                if u < half {
                    *v = stats.min;
                } else if u < spec.ratio {
                    *v = stats.max;
                }
            }
        }
    }
    Ok(out)
}
