//! Recorded forward computation, stored step-major in flat buffers.

use crate::tensor::Tensor;

use super::HiddenState;

/// Sizes that fix the memory layout of a trace.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct Layout {
    pub cells: usize,
    pub hidden: usize,
    pub cell_input: usize,
    pub input: usize,
    pub output: usize,
}

impl Layout {
    pub fn state(&self) -> usize {
        self.cells * self.hidden
    }

    pub fn gates(&self) -> usize {
        4 * self.cells * self.hidden
    }
}

/// Everything a backward pass needs: inputs, gate pre-activations and
/// activations, the state sequence (including the seed) and the readouts.
#[derive(Clone, Debug)]
pub struct ForwardTrace {
    pub(crate) layout: Layout,
    pub(crate) closed_loop: bool,
    pub(crate) steps: usize,
    pub(crate) inputs: Vec<f64>,
    pub(crate) cell_inputs: Vec<f64>,
    /// `(steps + 1) * state` values; block 0 is the seed.
    pub(crate) h: Vec<f64>,
    pub(crate) c: Vec<f64>,
    pub(crate) pre: Vec<f64>,
    pub(crate) act: Vec<f64>,
    pub(crate) tanh_c: Vec<f64>,
    pub(crate) outputs: Vec<f64>,
}

impl ForwardTrace {
    pub(crate) fn start(layout: Layout, seed: &HiddenState, closed_loop: bool, capacity: usize) -> Self {
        let s = layout.state();
        let mut h = Vec::with_capacity((capacity + 1) * s);
        let mut c = Vec::with_capacity((capacity + 1) * s);
        h.extend_from_slice(seed.h.data());
        c.extend_from_slice(seed.c.data());
        ForwardTrace {
            layout,
            closed_loop,
            steps: 0,
            inputs: Vec::with_capacity(capacity * layout.input),
            cell_inputs: Vec::with_capacity(capacity * layout.cells * layout.cell_input),
            h,
            c,
            pre: Vec::with_capacity(capacity * layout.gates()),
            act: Vec::with_capacity(capacity * layout.gates()),
            tanh_c: Vec::with_capacity(capacity * s),
            outputs: Vec::with_capacity(capacity * layout.output),
        }
    }

    pub fn len(&self) -> usize {
        self.steps
    }

    pub fn is_empty(&self) -> bool {
        self.steps == 0
    }

    pub fn is_closed_loop(&self) -> bool {
        self.closed_loop
    }

    pub fn input_size(&self) -> usize {
        self.layout.input
    }

    pub fn output_size(&self) -> usize {
        self.layout.output
    }

    /// External input consumed at step `t`.
    pub fn input(&self, t: usize) -> &[f64] {
        let d = self.layout.input;
        &self.inputs[t * d..(t + 1) * d]
    }

    /// Readout produced at step `t`.
    pub fn output(&self, t: usize) -> &[f64] {
        let o = self.layout.output;
        &self.outputs[t * o..(t + 1) * o]
    }

    /// All readouts, step-major.
    pub fn outputs(&self) -> &[f64] {
        &self.outputs
    }

    pub fn inputs(&self) -> &[f64] {
        &self.inputs
    }

    /// Hidden outputs after `t` steps (`t = 0` is the seed).
    pub fn hidden(&self, t: usize) -> &[f64] {
        let s = self.layout.state();
        &self.h[t * s..(t + 1) * s]
    }

    pub fn cell(&self, t: usize) -> &[f64] {
        let s = self.layout.state();
        &self.c[t * s..(t + 1) * s]
    }

    /// State after `t` steps (`t = 0` is the seed).
    pub fn state(&self, t: usize) -> HiddenState {
        HiddenState::from_slices(self.hidden(t), self.cell(t))
    }

    pub fn seed(&self) -> HiddenState {
        self.state(0)
    }

    pub fn final_state(&self) -> HiddenState {
        self.state(self.steps)
    }

    pub fn pre_activations(&self, t: usize) -> &[f64] {
        let g = self.layout.gates();
        &self.pre[t * g..(t + 1) * g]
    }

    pub fn gate_activations(&self, t: usize) -> &[f64] {
        let g = self.layout.gates();
        &self.act[t * g..(t + 1) * g]
    }

    pub fn output_tensor(&self, t: usize) -> Tensor {
        Tensor::from_raw(vec![self.layout.output], self.output(t).to_vec())
    }
}
