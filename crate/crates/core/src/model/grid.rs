//! Grid of weight-shared LSTM cells with 4-neighbourhood lateral wiring.
//!
//! Each cell receives its local scalar followed by the previous-step hidden
//! outputs of its north, east, south and west neighbours. Positions outside
//! the grid contribute zeros.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::{ForwardTrace, HiddenState, LstmParams, Net, Topology};

pub const LATERAL_NEIGHBORS: usize = 4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridModelParams {
    pub(crate) cell: LstmParams,
    pub(crate) rows: usize,
    pub(crate) cols: usize,
}

impl GridModelParams {
    pub fn new(cell: LstmParams, rows: usize, cols: usize) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::config("grid extents must be positive"));
        }
        let want = 1 + LATERAL_NEIGHBORS * cell.hidden_size();
        if cell.input_size() != want {
            return Err(Error::config(format!(
                "grid cell must read 1 local + {LATERAL_NEIGHBORS}x{} lateral values ({want}), it reads {}",
                cell.hidden_size(),
                cell.input_size()
            )));
        }
        if cell.output_size() != 1 {
            return Err(Error::config("grid cells emit exactly one value"));
        }
        Ok(GridModelParams { cell, rows, cols })
    }

    pub fn zeros(rows: usize, cols: usize, hidden: usize) -> Self {
        GridModelParams { cell: LstmParams::zeros(1 + LATERAL_NEIGHBORS * hidden, hidden, 1), rows, cols }
    }

    pub fn init_uniform<R: Rng + ?Sized>(rows: usize, cols: usize, hidden: usize, rng: &mut R) -> Self {
        GridModelParams {
            cell: LstmParams::init_uniform(1 + LATERAL_NEIGHBORS * hidden, hidden, 1, rng),
            rows,
            cols,
        }
    }

    pub fn cell(&self) -> &LstmParams {
        &self.cell
    }

    pub fn cell_mut(&mut self) -> &mut LstmParams {
        &mut self.cell
    }

    pub fn extents(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn lateral_arity(&self) -> usize {
        LATERAL_NEIGHBORS
    }

    pub(crate) fn net(&self) -> Net<'_> {
        Net { cell: &self.cell, topology: Topology::Grid { rows: self.rows, cols: self.cols } }
    }
}

/// Neighbour indices in N, E, S, W order.
#[inline]
pub(crate) fn neighbors(rows: usize, cols: usize, r: usize, c: usize) -> [Option<usize>; 4] {
    [
        (r > 0).then(|| (r - 1) * cols + c),
        (c + 1 < cols).then(|| r * cols + c + 1),
        (r + 1 < rows).then(|| (r + 1) * cols + c),
        (c > 0).then(|| r * cols + c - 1),
    ]
}

/// One step of the grid model on a full field.
pub fn grid_forward_step(
    params: &GridModelParams,
    state: &HiddenState,
    field: &Tensor,
) -> Result<(HiddenState, Tensor, ForwardTrace)> {
    if field.len() != params.rows * params.cols {
        return Err(Error::config(format!(
            "field has {} values, grid is {}x{}",
            field.len(),
            params.rows,
            params.cols
        )));
    }
    let (next, out, trace) = params.net().forward_step(state, field)?;
    let out = Tensor::from_raw(vec![params.rows, params.cols], out.into_data());
    Ok((next, out, trace))
}
