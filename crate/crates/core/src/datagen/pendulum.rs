//! Double pendulum integrated with classical RK4.
//!
//! Angles are measured from the downward vertical; `theta = 0` is the stable
//! rest position.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PendulumObservable {
    /// Cartesian position of the second mass.
    EndEffector,
    /// The two (unwrapped) joint angles.
    Angles,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PendulumSpec {
    pub l1: f64,
    pub l2: f64,
    pub m1: f64,
    pub m2: f64,
    pub g: f64,
    /// Integration step; one sequence step is one integration step.
    pub dt: f64,
    pub steps: usize,
    pub observable: PendulumObservable,
    /// Fraction of samples started with zero angular velocity.
    pub zero_momentum_fraction: f64,
    /// Initial angular velocities of the remaining samples are drawn from
    /// `U[-max_initial_velocity, max_initial_velocity]`.
    pub max_initial_velocity: f64,
    pub seed: u64,
}

impl Default for PendulumSpec {
    fn default() -> Self {
        PendulumSpec {
            l1: 1.0,
            l2: 1.0,
            m1: 1.0,
            m2: 1.0,
            g: 9.81,
            dt: 0.01,
            steps: 400,
            observable: PendulumObservable::EndEffector,
            zero_momentum_fraction: 0.1,
            max_initial_velocity: 1.0,
            seed: 0,
        }
    }
}

impl PendulumSpec {
    pub fn lambda(&self) -> f64 {
        self.l1 / self.l2
    }

    pub fn g1(&self) -> f64 {
        self.g / self.l1
    }

    pub fn g2(&self) -> f64 {
        self.g / self.l2
    }

    pub fn mu(&self) -> f64 {
        self.m2 / (self.m1 + self.m2)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("l1", self.l1), ("l2", self.l2), ("m1", self.m1), ("m2", self.m2), ("dt", self.dt)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::validation(format!("pendulum {name} must be positive, got {v}")));
            }
        }
        if self.steps == 0 {
            return Err(Error::validation("pendulum sequences need at least one step"));
        }
        if !(0.0..=1.0).contains(&self.zero_momentum_fraction) {
            return Err(Error::validation("zero_momentum_fraction must lie in [0, 1]"));
        }
        if !(self.max_initial_velocity >= 0.0) {
            return Err(Error::validation("max_initial_velocity must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PendulumState {
    pub theta1: f64,
    pub theta2: f64,
    pub omega1: f64,
    pub omega2: f64,
}

impl PendulumState {
    pub fn at_rest(theta1: f64, theta2: f64) -> Self {
        PendulumState { theta1, theta2, omega1: 0.0, omega2: 0.0 }
    }

    fn is_finite(&self) -> bool {
        self.theta1.is_finite() && self.theta2.is_finite() && self.omega1.is_finite() && self.omega2.is_finite()
    }

    fn offset(&self, d: &Derivative, h: f64) -> Self {
        PendulumState {
            theta1: self.theta1 + h * d.dtheta1,
            theta2: self.theta2 + h * d.dtheta2,
            omega1: self.omega1 + h * d.domega1,
            omega2: self.omega2 + h * d.domega2,
        }
    }

    /// `(x, y)` of the second mass, pivot at the origin, `y` pointing up.
    pub fn end_effector(&self, spec: &PendulumSpec) -> (f64, f64) {
        (
            spec.l1 * self.theta1.sin() + spec.l2 * self.theta2.sin(),
            -spec.l1 * self.theta1.cos() - spec.l2 * self.theta2.cos(),
        )
    }
}

struct Derivative {
    dtheta1: f64,
    dtheta2: f64,
    domega1: f64,
    domega2: f64,
}

/// Angular accelerations from the Euler-Lagrange equations.
pub fn pendulum_accelerations(state: &PendulumState, spec: &PendulumSpec) -> Result<(f64, f64)> {
    if !state.is_finite() {
        return Err(Error::Numeric { step: 0, what: format!("pendulum state {state:?}") });
    }
    let (mu, lambda, g1, g2) = (spec.mu(), spec.lambda(), spec.g1(), spec.g2());
    let d = state.theta2 - state.theta1;
    let (sd, cd) = d.sin_cos();
    let denom = 1.0 - mu * cd * cd;
    let w1s = state.omega1 * state.omega1;
    let w2s = state.omega2 * state.omega2;
    let acc1 = (mu * g1 * state.theta2.sin() * cd + mu * w1s * sd * cd - g1 * state.theta1.sin() + mu / lambda * w2s * sd) / denom;
    let acc2 = (g2 * state.theta1.sin() * cd - mu * w2s * sd * cd - g2 * state.theta2.sin() - lambda * w1s * sd) / denom;
    Ok((acc1, acc2))
}

fn derivative(state: &PendulumState, spec: &PendulumSpec) -> Result<Derivative> {
    let (a1, a2) = pendulum_accelerations(state, spec)?;
    Ok(Derivative { dtheta1: state.omega1, dtheta2: state.omega2, domega1: a1, domega2: a2 })
}

/// One classical fourth-order Runge-Kutta step of size `h`.
pub fn rk4_step(state: &PendulumState, spec: &PendulumSpec, h: f64) -> Result<PendulumState> {
    if !(h > 0.0) {
        return Err(Error::contract(format!("RK4 step must be positive, got {h}")));
    }
    let k1 = derivative(state, spec)?;
    let k2 = derivative(&state.offset(&k1, h / 2.0), spec)?;
    let k3 = derivative(&state.offset(&k2, h / 2.0), spec)?;
    let k4 = derivative(&state.offset(&k3, h), spec)?;
    let comb = |a: f64, b: f64, c: f64, d: f64| (a + 2.0 * b + 2.0 * c + d) / 6.0;
    Ok(PendulumState {
        theta1: state.theta1 + h * comb(k1.dtheta1, k2.dtheta1, k3.dtheta1, k4.dtheta1),
        theta2: state.theta2 + h * comb(k1.dtheta2, k2.dtheta2, k3.dtheta2, k4.dtheta2),
        omega1: state.omega1 + h * comb(k1.domega1, k2.domega1, k3.domega1, k4.domega1),
        omega2: state.omega2 + h * comb(k1.domega2, k2.domega2, k3.domega2, k4.domega2),
    })
}

/// Trajectory of `steps` states starting with `start`.
pub fn simulate(start: PendulumState, spec: &PendulumSpec, steps: usize) -> Result<Vec<PendulumState>> {
    let mut out = Vec::with_capacity(steps);
    let mut s = start;
    for _ in 0..steps {
        out.push(s);
        s = rk4_step(&s, spec, spec.dt)?;
    }
    Ok(out)
}

/// Random initial state: `theta1 ~ U[90, 270] deg`, `theta2 ~ theta1 + U[-30, 30] deg`.
pub fn draw_initial_state<R: Rng + ?Sized>(spec: &PendulumSpec, rng: &mut R) -> PendulumState {
    let theta1 = rng.random_range(90f64..=270.0).to_radians();
    let theta2 = theta1 + rng.random_range(-30f64..=30.0).to_radians();
    let at_rest = rng.random::<f64>() < spec.zero_momentum_fraction;
    let v = spec.max_initial_velocity;
    let (omega1, omega2) = if at_rest || v == 0.0 {
        (0.0, 0.0)
    } else {
        (rng.random_range(-v..=v), rng.random_range(-v..=v))
    };
    PendulumState { theta1, theta2, omega1, omega2 }
}

/// Observations of a trajectory, two channels per step.
pub fn observe(states: &[PendulumState], spec: &PendulumSpec) -> Vec<f64> {
    let mut out = Vec::with_capacity(states.len() * 2);
    for s in states {
        let (a, b) = match spec.observable {
            PendulumObservable::EndEffector => s.end_effector(spec),
            PendulumObservable::Angles => (s.theta1, s.theta2),
        };
        out.push(a);
        out.push(b);
    }
    out
}

/// One clean pendulum sequence (`steps x 2`, step-major).
pub fn gen_pendulum<R: Rng + ?Sized>(spec: &PendulumSpec, rng: &mut R) -> Result<Vec<f64>> {
    spec.validate()?;
    let start = draw_initial_state(spec, rng);
    Ok(observe(&simulate(start, spec, spec.steps)?, spec))
}
