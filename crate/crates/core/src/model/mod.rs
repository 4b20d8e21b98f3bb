//! Differentiable LSTM sequence models.
//!
//! Two topologies share one implementation: a single LSTM cell reading a
//! `D`-dimensional input, and a rectangular grid of weight-shared cells
//! where each cell reads its local scalar plus the previous hidden outputs of
//! its four neighbours. Both produce a [`ForwardTrace`] that backward passes
//! consume without recomputing anything.

mod grid;
pub mod io;
mod kernel;
mod lstm;
mod trace;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub use grid::{grid_forward_step, GridModelParams, LATERAL_NEIGHBORS};
pub use lstm::{forward_step, HiddenState, LstmParams};
pub use trace::ForwardTrace;

use kernel::{cell_activate, cell_backprop, matvec, matvec_t_acc, outer_acc};
use trace::Layout;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Lstm,
    Grid,
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ModelKind::Lstm => "lstm",
            ModelKind::Grid => "grid",
        })
    }
}

/// How a rollout obtains its inputs.
#[derive(Clone, Copy, Debug)]
pub enum Drive<'a> {
    /// Consume the given inputs, flattened step-major (teacher forcing).
    TeacherForced(&'a [f64]),
    /// Feed each readout back as the next input.
    ClosedLoop { first_input: &'a [f64], steps: usize },
}

/// Reverse-mode gradients of a scalar loss.
#[derive(Clone, Debug)]
pub struct Gradients {
    pub params: LstmParams,
    pub seed: HiddenState,
    /// Gradient with respect to each step's input, step-major. In closed-loop
    /// traces only step 0 is an independent input; later entries are the
    /// partial derivative with respect to the fed-back value.
    pub inputs: Vec<f64>,
}

/// Seed-only gradients, skipping parameter accumulation.
#[derive(Clone, Debug)]
pub struct SeedGradients {
    pub seed: HiddenState,
    pub inputs: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Topology {
    Single,
    Grid { rows: usize, cols: usize },
}

/// Borrowed view used by every kernel.
#[derive(Clone, Copy)]
pub(crate) struct Net<'a> {
    cell: &'a LstmParams,
    topology: Topology,
}

impl<'a> Net<'a> {
    pub(crate) fn single(cell: &'a LstmParams) -> Self {
        Net { cell, topology: Topology::Single }
    }

    fn layout(&self) -> Layout {
        let hidden = self.cell.hidden_size();
        match self.topology {
            Topology::Single => Layout {
                cells: 1,
                hidden,
                cell_input: self.cell.input_size(),
                input: self.cell.input_size(),
                output: self.cell.output_size(),
            },
            Topology::Grid { rows, cols } => Layout {
                cells: rows * cols,
                hidden,
                cell_input: self.cell.input_size(),
                input: rows * cols,
                output: rows * cols,
            },
        }
    }

    fn check_state(&self, state: &HiddenState) -> Result<()> {
        let want = self.layout().state();
        if state.h.len() != want || state.c.len() != want {
            return Err(Error::contract(format!(
                "state has {}/{} entries, model needs {want}",
                state.h.len(),
                state.c.len()
            )));
        }
        if !state.is_finite() {
            return Err(Error::Numeric { step: 0, what: "seed state is not finite".into() });
        }
        Ok(())
    }

    /// Assemble each cell's input vector from the external input and the
    /// previous hidden outputs.
    fn gather(&self, input: &[f64], h_prev: &[f64], out: &mut [f64]) {
        match self.topology {
            Topology::Single => out.copy_from_slice(input),
            Topology::Grid { rows, cols } => {
                let hidden = self.cell.hidden_size();
                let width = self.cell.input_size();
                for r in 0..rows {
                    for c in 0..cols {
                        let k = r * cols + c;
                        let dst = &mut out[k * width..(k + 1) * width];
                        dst[0] = input[k];
                        for (slot, nb) in grid::neighbors(rows, cols, r, c).into_iter().enumerate() {
                            let lane = &mut dst[1 + slot * hidden..1 + (slot + 1) * hidden];
                            match nb {
                                Some(j) => lane.copy_from_slice(&h_prev[j * hidden..(j + 1) * hidden]),
                                None => lane.fill(0.0),
                            }
                        }
                    }
                }
            }
        }
    }

    /// Append one step to `trace`.
    fn advance(&self, trace: &mut ForwardTrace, input: &[f64]) -> Result<()> {
        let lay = trace.layout;
        let (s, hid, cin) = (lay.state(), lay.hidden, lay.cell_input);
        let t = trace.steps;

        trace.inputs.extend_from_slice(input);
        let ci0 = trace.cell_inputs.len();
        trace.cell_inputs.resize(ci0 + lay.cells * cin, 0.0);
        let g0 = trace.pre.len();
        trace.pre.resize(g0 + lay.gates(), 0.0);
        trace.act.resize(g0 + lay.gates(), 0.0);
        let tc0 = trace.tanh_c.len();
        trace.tanh_c.resize(tc0 + s, 0.0);
        trace.h.resize((t + 2) * s, 0.0);
        trace.c.resize((t + 2) * s, 0.0);
        let o0 = trace.outputs.len();
        trace.outputs.resize(o0 + lay.output, 0.0);

        let (h_hist, h_new) = trace.h.split_at_mut((t + 1) * s);
        let h_prev = &h_hist[t * s..];
        let (c_hist, c_new) = trace.c.split_at_mut((t + 1) * s);
        let c_prev = &c_hist[t * s..];
        let xs = &mut trace.cell_inputs[ci0..];
        self.gather(input, h_prev, xs);

        let wi = self.cell.input_weights().data();
        let wh = self.cell.recurrent_weights().data();
        let wo = self.cell.output_weights().data();
        let pre = &mut trace.pre[g0..];
        let act = &mut trace.act[g0..];
        let tanh_c = &mut trace.tanh_c[tc0..];
        let outputs = &mut trace.outputs[o0..];
        let per_cell_out = self.cell.output_size();
        for k in 0..lay.cells {
            let g = &mut pre[k * 4 * hid..(k + 1) * 4 * hid];
            matvec(wi, &xs[k * cin..(k + 1) * cin], g);
            let hp = &h_prev[k * hid..(k + 1) * hid];
            for (row, z) in wh.chunks_exact(hid).zip(g.iter_mut()) {
                *z += kernel::dot(row, hp);
            }
            let cell = k * hid..(k + 1) * hid;
            cell_activate(
                hid,
                g,
                &c_prev[cell.clone()],
                &mut act[k * 4 * hid..(k + 1) * 4 * hid],
                &mut c_new[cell.clone()],
                &mut tanh_c[cell.clone()],
                &mut h_new[cell.clone()],
            );
            matvec(wo, &h_new[cell], &mut outputs[k * per_cell_out..(k + 1) * per_cell_out]);
        }
        trace.steps += 1;

        if let Some(j) = outputs.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numeric { step: t, what: format!("readout {j} is {}", outputs[j]) });
        }
        if c_new.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric { step: t, what: "cell state overflowed".into() });
        }
        Ok(())
    }

    pub(crate) fn forward_step(&self, state: &HiddenState, input: &Tensor) -> Result<(HiddenState, Tensor, ForwardTrace)> {
        let trace = self.rollout(state, Drive::TeacherForced(input.data()))?;
        if trace.len() != 1 {
            return Err(Error::contract(format!(
                "a single step needs exactly {} input values, got {}",
                self.layout().input,
                input.len()
            )));
        }
        Ok((trace.final_state(), trace.output_tensor(0), trace))
    }

    pub(crate) fn rollout(&self, seed: &HiddenState, drive: Drive<'_>) -> Result<ForwardTrace> {
        let lay = self.layout();
        self.check_state(seed)?;
        match drive {
            Drive::TeacherForced(inputs) => {
                if inputs.is_empty() || inputs.len() % lay.input != 0 {
                    return Err(Error::contract(format!(
                        "teacher-forced inputs must be a non-empty multiple of {} values, got {}",
                        lay.input,
                        inputs.len()
                    )));
                }
                let steps = inputs.len() / lay.input;
                let mut trace = ForwardTrace::start(lay, seed, false, steps);
                for x in inputs.chunks_exact(lay.input) {
                    self.advance(&mut trace, x)?;
                }
                Ok(trace)
            }
            Drive::ClosedLoop { first_input, steps } => {
                if lay.input != lay.output {
                    return Err(Error::config(format!(
                        "closed-loop rollout needs input size == output size, got {} vs {}",
                        lay.input, lay.output
                    )));
                }
                if steps == 0 {
                    return Err(Error::contract("closed-loop rollout needs at least one step"));
                }
                if first_input.len() != lay.input {
                    return Err(Error::contract(format!(
                        "first input has {} values, model needs {}",
                        first_input.len(),
                        lay.input
                    )));
                }
                let mut trace = ForwardTrace::start(lay, seed, true, steps);
                let mut x = first_input.to_vec();
                for t in 0..steps {
                    self.advance(&mut trace, &x)?;
                    x.copy_from_slice(trace.output(t));
                }
                Ok(trace)
            }
        }
    }

    /// Backpropagation through time. Parameter gradients are accumulated only
    /// when `param_grads` is given.
    pub(crate) fn backprop(
        &self,
        trace: &ForwardTrace,
        output_grads: &[f64],
        mut param_grads: Option<&mut LstmParams>,
    ) -> Result<SeedGradients> {
        let lay = self.layout();
        if trace.layout != lay {
            return Err(Error::contract("trace was recorded by a differently shaped model"));
        }
        let steps = trace.steps;
        if output_grads.len() != steps * lay.output {
            return Err(Error::contract(format!(
                "expected {} output gradients ({} steps x {}), got {}",
                steps * lay.output,
                steps,
                lay.output,
                output_grads.len()
            )));
        }
        let (s, hid, cin) = (lay.state(), lay.hidden, lay.cell_input);
        let per_cell_out = self.cell.output_size();
        let wi = self.cell.input_weights().data();
        let wh = self.cell.recurrent_weights().data();
        let wo = self.cell.output_weights().data();

        let mut dh_next = vec![0.0; s];
        let mut dc_next = vec![0.0; s];
        let mut dh = vec![0.0; s];
        let mut dh_prev = vec![0.0; s];
        let mut dc_prev = vec![0.0; s];
        let mut dy = vec![0.0; lay.output];
        let mut dz = vec![0.0; 4 * hid];
        let mut dx_cell = vec![0.0; cin];
        let mut dx = vec![0.0; steps * lay.input];

        for t in (0..steps).rev() {
            dy.copy_from_slice(&output_grads[t * lay.output..(t + 1) * lay.output]);
            if trace.closed_loop && t + 1 < steps {
                kernel::axpy(&mut dy, 1.0, &dx[(t + 1) * lay.input..(t + 2) * lay.input]);
            }
            let h_t = trace.hidden(t + 1);
            dh.copy_from_slice(&dh_next);
            for k in 0..lay.cells {
                let dyk = &dy[k * per_cell_out..(k + 1) * per_cell_out];
                let hk = &h_t[k * hid..(k + 1) * hid];
                matvec_t_acc(wo, dyk, &mut dh[k * hid..(k + 1) * hid]);
                if let Some(pg) = param_grads.as_deref_mut() {
                    outer_acc(pg.tensors_mut()[2].data_mut(), dyk, hk);
                }
            }

            dh_prev.fill(0.0);
            let h_prev = trace.hidden(t);
            let c_prev = trace.cell(t);
            let gates = 4 * hid;
            let act = &trace.act[t * lay.gates()..(t + 1) * lay.gates()];
            let tanh_c = &trace.tanh_c[t * s..(t + 1) * s];
            let xs = &trace.cell_inputs[t * lay.cells * cin..(t + 1) * lay.cells * cin];
            let dx_t = &mut dx[t * lay.input..(t + 1) * lay.input];
            for k in 0..lay.cells {
                let cell = k * hid..(k + 1) * hid;
                cell_backprop(
                    hid,
                    &act[k * gates..(k + 1) * gates],
                    &tanh_c[cell.clone()],
                    &c_prev[cell.clone()],
                    &dh[cell.clone()],
                    &dc_next[cell.clone()],
                    &mut dz,
                    &mut dc_prev[cell.clone()],
                );
                let xk = &xs[k * cin..(k + 1) * cin];
                if let Some(pg) = param_grads.as_deref_mut() {
                    let [gwi, gwh, _] = pg.tensors_mut();
                    outer_acc(gwi.data_mut(), &dz, xk);
                    outer_acc(gwh.data_mut(), &dz, &h_prev[cell.clone()]);
                }
                matvec_t_acc(wh, &dz, &mut dh_prev[cell]);
                dx_cell.fill(0.0);
                matvec_t_acc(wi, &dz, &mut dx_cell);
                match self.topology {
                    Topology::Single => dx_t.copy_from_slice(&dx_cell),
                    Topology::Grid { rows, cols } => {
                        dx_t[k] = dx_cell[0];
                        let (r, c) = (k / cols, k % cols);
                        for (slot, nb) in grid::neighbors(rows, cols, r, c).into_iter().enumerate() {
                            if let Some(j) = nb {
                                kernel::axpy(
                                    &mut dh_prev[j * hid..(j + 1) * hid],
                                    1.0,
                                    &dx_cell[1 + slot * hid..1 + (slot + 1) * hid],
                                );
                            }
                        }
                    }
                }
            }
            std::mem::swap(&mut dh_next, &mut dh_prev);
            std::mem::swap(&mut dc_next, &mut dc_prev);
        }

        Ok(SeedGradients {
            seed: HiddenState::from_slices(&dh_next, &dc_next),
            inputs: dx,
        })
    }
}

/// A trained or trainable sequence model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Model {
    Lstm(LstmParams),
    Grid(GridModelParams),
}

impl Model {
    pub(crate) fn net(&self) -> Net<'_> {
        match self {
            Model::Lstm(p) => Net::single(p),
            Model::Grid(g) => Net { cell: &g.cell, topology: Topology::Grid { rows: g.rows, cols: g.cols } },
        }
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            Model::Lstm(_) => ModelKind::Lstm,
            Model::Grid(_) => ModelKind::Grid,
        }
    }

    /// The (shared) LSTM cell.
    pub fn cell(&self) -> &LstmParams {
        match self {
            Model::Lstm(p) => p,
            Model::Grid(g) => &g.cell,
        }
    }

    pub fn cell_mut(&mut self) -> &mut LstmParams {
        match self {
            Model::Lstm(p) => p,
            Model::Grid(g) => &mut g.cell,
        }
    }

    /// External input width per step.
    pub fn input_size(&self) -> usize {
        self.net().layout().input
    }

    pub fn output_size(&self) -> usize {
        self.net().layout().output
    }

    /// Length of `h` (and `c`) across all cells.
    pub fn state_size(&self) -> usize {
        self.net().layout().state()
    }

    pub fn zero_state(&self) -> HiddenState {
        HiddenState::zeros(self.state_size())
    }

    pub fn forward_step(&self, state: &HiddenState, input: &Tensor) -> Result<(HiddenState, Tensor, ForwardTrace)> {
        self.net().forward_step(state, input)
    }

    pub fn rollout(&self, seed: &HiddenState, drive: Drive<'_>) -> Result<ForwardTrace> {
        self.net().rollout(seed, drive)
    }

    /// Exact gradients of the loss whose derivative with respect to each
    /// readout is `output_grads` (step-major).
    pub fn backward(&self, trace: &ForwardTrace, output_grads: &[f64]) -> Result<Gradients> {
        let mut params = self.cell().zeros_like();
        let sg = self.net().backprop(trace, output_grads, Some(&mut params))?;
        Ok(Gradients { params, seed: sg.seed, inputs: sg.inputs })
    }

    /// Like [`Model::backward`] but without parameter gradients.
    pub fn seed_gradients(&self, trace: &ForwardTrace, output_grads: &[f64]) -> Result<SeedGradients> {
        self.net().backprop(trace, output_grads, None)
    }

    /// Accumulate parameter gradients into `acc` and return the seed gradients.
    pub fn backward_into(&self, trace: &ForwardTrace, output_grads: &[f64], acc: &mut LstmParams) -> Result<SeedGradients> {
        if !acc.same_shape(self.cell()) {
            return Err(Error::contract("gradient accumulator does not match the model's cell"));
        }
        self.net().backprop(trace, output_grads, Some(acc))
    }
}
