//! 2-D wave equation on a rectangular grid, leapfrog in time and second
//! order central differences in space. Neighbours outside the grid read as
//! zero, which reflects waves at the border.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WaveSpec {
    pub rows: usize,
    pub cols: usize,
    /// Propagation speed.
    pub c: f64,
    pub ht: f64,
    pub hx: f64,
    pub hy: f64,
    pub steps: usize,
    /// Initial Gaussian bump amplitude range.
    pub amplitude: (f64, f64),
    /// Initial Gaussian bump width range, in cells.
    pub width: (f64, f64),
    pub seed: u64,
}

impl Default for WaveSpec {
    fn default() -> Self {
        WaveSpec {
            rows: 16,
            cols: 16,
            c: 3.0,
            ht: 0.1,
            hx: 1.0,
            hy: 1.0,
            steps: 80,
            amplitude: (0.5, 1.5),
            width: (1.0, 3.0),
            seed: 0,
        }
    }
}

impl WaveSpec {
    pub fn cells(&self) -> usize {
        self.rows * self.cols
    }

    /// `c h_t sqrt(1/h_x^2 + 1/h_y^2)`; the scheme is stable when this is <= 1.
    pub fn courant(&self) -> f64 {
        self.c * self.ht * (1.0 / (self.hx * self.hx) + 1.0 / (self.hy * self.hy)).sqrt()
    }

    pub fn validate(&self) -> Result<()> {
        if self.rows == 0 || self.cols == 0 {
            return Err(Error::validation("wave grid extents must be positive"));
        }
        if self.steps == 0 {
            return Err(Error::validation("wave sequences need at least one step"));
        }
        for (name, v) in [("c", self.c), ("ht", self.ht), ("hx", self.hx), ("hy", self.hy)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::validation(format!("wave {name} must be positive, got {v}")));
            }
        }
        if self.courant() > 1.0 {
            return Err(Error::validation(format!("unstable wave parameters: Courant number {:.3} > 1", self.courant())));
        }
        if self.amplitude.0 > self.amplitude.1 || self.width.0 > self.width.1 || self.width.0 <= 0.0 {
            return Err(Error::validation("wave bump ranges must be ordered with positive width"));
        }
        Ok(())
    }
}

/// Advance the field by one time step.
pub fn wave_step(u_prev: &[f64], u_curr: &[f64], spec: &WaveSpec) -> Result<Vec<f64>> {
    let n = spec.cells();
    if u_prev.len() != n || u_curr.len() != n {
        return Err(Error::contract(format!(
            "wave fields have {} / {} cells, grid has {n}",
            u_prev.len(),
            u_curr.len()
        )));
    }
    let (rows, cols) = (spec.rows, spec.cols);
    let k = spec.c * spec.c * spec.ht * spec.ht;
    let (ix, iy) = (1.0 / (spec.hx * spec.hx), 1.0 / (spec.hy * spec.hy));
    let at = |r: isize, c: isize| -> f64 {
        if r < 0 || c < 0 || r >= rows as isize || c >= cols as isize {
            0.0
        } else {
            u_curr[r as usize * cols + c as usize]
        }
    };
    let mut next = vec![0.0; n];
    for r in 0..rows as isize {
        for c in 0..cols as isize {
            let u = at(r, c);
            let uxx = (at(r, c + 1) - 2.0 * u + at(r, c - 1)) * ix;
            let uyy = (at(r + 1, c) - 2.0 * u + at(r - 1, c)) * iy;
            let i = r as usize * cols + c as usize;
            next[i] = k * (uxx + uyy) + 2.0 * u - u_prev[i];
        }
    }
    Ok(next)
}

/// Gaussian bump with a random centre, amplitude and width.
pub fn draw_initial_field<R: Rng + ?Sized>(spec: &WaveSpec, rng: &mut R) -> Vec<f64> {
    let cy = rng.random_range(0.0..=(spec.rows - 1) as f64);
    let cx = rng.random_range(0.0..=(spec.cols - 1) as f64);
    let amp = rng.random_range(spec.amplitude.0..=spec.amplitude.1);
    let width = rng.random_range(spec.width.0..=spec.width.1);
    let mut u = vec![0.0; spec.cells()];
    for r in 0..spec.rows {
        for c in 0..spec.cols {
            let d2 = (r as f64 - cy).powi(2) + (c as f64 - cx).powi(2);
            u[r * spec.cols + c] = amp * (-d2 / (2.0 * width * width)).exp();
        }
    }
    u
}

/// Field sequence starting from `initial` at rest (previous field equal to
/// the initial one). Returns `steps` fields, step-major.
pub fn simulate(initial: &[f64], spec: &WaveSpec, steps: usize) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(steps * spec.cells());
    let mut prev = initial.to_vec();
    let mut curr = initial.to_vec();
    for _ in 0..steps {
        out.extend_from_slice(&curr);
        let next = wave_step(&prev, &curr, spec)?;
        prev = std::mem::replace(&mut curr, next);
    }
    Ok(out)
}

/// One clean wave sequence (`steps x rows*cols`, step-major).
pub fn gen_wave<R: Rng + ?Sized>(spec: &WaveSpec, rng: &mut R) -> Result<Vec<f64>> {
    spec.validate()?;
    let u0 = draw_initial_field(spec, rng);
    simulate(&u0, spec, spec.steps)
}
