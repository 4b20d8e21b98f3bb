//! Bias-free LSTM cell parameters and recurrent state.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::{ForwardTrace, Net};

/// Weights of a single LSTM cell with a linear readout.
///
/// Gate rows are stacked `[input; forget; candidate; output]`, each block
/// `hidden` rows tall. There are no bias vectors anywhere.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LstmParams {
    input_weights: Tensor,
    recurrent_weights: Tensor,
    output_weights: Tensor,
}

impl LstmParams {
    pub fn new(input_weights: Tensor, recurrent_weights: Tensor, output_weights: Tensor) -> Result<Self> {
        let bad = |what: &str| Err(Error::contract(format!("LSTM weights: {what}")));
        if input_weights.shape().len() != 2 || recurrent_weights.shape().len() != 2 || output_weights.shape().len() != 2 {
            return bad("every weight tensor must be rank 2");
        }
        let rows = recurrent_weights.shape()[0];
        let hidden = recurrent_weights.shape()[1];
        if hidden == 0 || rows != 4 * hidden {
            return bad(&format!("recurrent weights must be [4H x H], got {:?}", recurrent_weights.shape()));
        }
        if input_weights.shape()[0] != rows || input_weights.shape()[1] == 0 {
            return bad(&format!("input weights must be [4H x D], got {:?}", input_weights.shape()));
        }
        if output_weights.shape()[1] != hidden || output_weights.shape()[0] == 0 {
            return bad(&format!("output weights must be [O x H], got {:?}", output_weights.shape()));
        }
        Ok(LstmParams { input_weights, recurrent_weights, output_weights })
    }

    pub fn zeros(input: usize, hidden: usize, output: usize) -> Self {
        LstmParams {
            input_weights: Tensor::zeros(vec![4 * hidden, input]),
            recurrent_weights: Tensor::zeros(vec![4 * hidden, hidden]),
            output_weights: Tensor::zeros(vec![output, hidden]),
        }
    }

    /// Every weight drawn uniformly from `[-1/sqrt(H), 1/sqrt(H)]`.
    pub fn init_uniform<R: Rng + ?Sized>(input: usize, hidden: usize, output: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (hidden as f64).sqrt();
        let mut p = LstmParams::zeros(input, hidden, output);
        for w in p.tensors_mut() {
            for v in w.data_mut() {
                *v = rng.random_range(-bound..=bound);
            }
        }
        p
    }

    pub fn input_size(&self) -> usize {
        self.input_weights.shape()[1]
    }

    pub fn hidden_size(&self) -> usize {
        self.recurrent_weights.shape()[1]
    }

    pub fn output_size(&self) -> usize {
        self.output_weights.shape()[0]
    }

    pub fn input_weights(&self) -> &Tensor {
        &self.input_weights
    }

    pub fn recurrent_weights(&self) -> &Tensor {
        &self.recurrent_weights
    }

    pub fn output_weights(&self) -> &Tensor {
        &self.output_weights
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// The three weight tensors in serialization order.
    pub fn tensors(&self) -> [&Tensor; 3] {
        [&self.input_weights, &self.recurrent_weights, &self.output_weights]
    }

    pub fn tensors_mut(&mut self) -> [&mut Tensor; 3] {
        [&mut self.input_weights, &mut self.recurrent_weights, &mut self.output_weights]
    }

    pub fn zeros_like(&self) -> Self {
        LstmParams::zeros(self.input_size(), self.hidden_size(), self.output_size())
    }

    pub fn same_shape(&self, other: &LstmParams) -> bool {
        self.tensors().iter().zip(other.tensors()).all(|(a, b)| a.shape() == b.shape())
    }

    /// `self += scale * other`.
    pub fn axpy(&mut self, scale: f64, other: &LstmParams) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            a.axpy(scale, b);
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for t in self.tensors_mut() {
            t.scale(factor);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.is_finite())
    }
}

/// Recurrent state `(h, c)`: hidden outputs and cell states.
///
/// For grid models both vectors hold every cell's state back to back.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HiddenState {
    pub h: Tensor,
    pub c: Tensor,
}

impl HiddenState {
    pub fn new(h: Tensor, c: Tensor) -> Result<Self> {
        if h.len() != c.len() {
            return Err(Error::contract(format!(
                "hidden outputs ({}) and cell states ({}) differ in length",
                h.len(),
                c.len()
            )));
        }
        if !h.is_finite() || !c.is_finite() {
            return Err(Error::Numeric { step: 0, what: "hidden state is not finite".into() });
        }
        Ok(HiddenState { h, c })
    }

    pub fn zeros(size: usize) -> Self {
        HiddenState { h: Tensor::zeros(vec![size]), c: Tensor::zeros(vec![size]) }
    }

    pub(crate) fn from_slices(h: &[f64], c: &[f64]) -> Self {
        HiddenState {
            h: Tensor::from_raw(vec![h.len()], h.to_vec()),
            c: Tensor::from_raw(vec![c.len()], c.to_vec()),
        }
    }

    pub fn len(&self) -> usize {
        self.h.len()
    }

    pub fn is_empty(&self) -> bool {
        self.h.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.h.is_finite() && self.c.is_finite()
    }
}

/// One step of the scalar LSTM: returns the next state, the readout and the
/// step's trace.
pub fn forward_step(params: &LstmParams, state: &HiddenState, input: &Tensor) -> Result<(HiddenState, Tensor, ForwardTrace)> {
    Net::single(params).forward_step(state, input)
}
