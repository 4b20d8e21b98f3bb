//! Parameter files: JSON header naming the three weight tensors and their
//! shapes, followed by the weights in header order.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::container::{self, PARAMS_MAGIC};
use crate::error::{Error, Result};
use crate::tensor::{Precision, Tensor};

use super::{GridModelParams, LstmParams, Model, ModelKind};

pub const TENSOR_NAMES: [&str; 3] = ["input_weights", "recurrent_weights", "output_weights"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridExtents {
    pub rows: usize,
    pub cols: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamHeader {
    pub format: String,
    pub version: u32,
    pub model_kind: ModelKind,
    pub precision: Precision,
    pub tensors: Vec<TensorEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridExtents>,
    pub config_hash: String,
    /// Free-form creation metadata (seed, training noise, epochs, ...).
    #[serde(default)]
    pub metadata: serde_json::Value,
}

pub fn save_model(path: &Path, model: &Model, precision: Precision, config_hash: &str, metadata: serde_json::Value) -> Result<()> {
    let cell = model.cell();
    let tensors = TENSOR_NAMES
        .iter()
        .zip(cell.tensors())
        .map(|(name, t)| TensorEntry { name: name.to_string(), shape: t.shape().to_vec() })
        .collect();
    let grid = match model {
        Model::Grid(g) => Some(GridExtents { rows: g.rows, cols: g.cols }),
        Model::Lstm(_) => None,
    };
    let header = ParamHeader {
        format: "atune-params".into(),
        version: 1,
        model_kind: model.kind(),
        precision,
        tensors,
        grid,
        config_hash: config_hash.to_string(),
        metadata,
    };
    let payload: Vec<f64> = cell.tensors().iter().flat_map(|t| t.data().iter().copied()).collect();
    container::write(path, PARAMS_MAGIC, &header, precision, &payload)
}

pub fn load_model(path: &Path) -> Result<(Model, ParamHeader)> {
    let (header, payload): (ParamHeader, Vec<f64>) = container::read(path, PARAMS_MAGIC)?;
    let bad = |reason: String| Error::Format { path: path.to_path_buf(), reason };
    if header.tensors.len() != 3 {
        return Err(bad(format!("expected exactly 3 weight tensors, found {}", header.tensors.len())));
    }
    let mut offset = 0;
    let mut tensors = Vec::with_capacity(3);
    for (entry, want) in header.tensors.iter().zip(TENSOR_NAMES) {
        if entry.name != want {
            return Err(bad(format!("tensor `{}` where `{want}` was expected", entry.name)));
        }
        let n: usize = entry.shape.iter().product();
        let data = payload
            .get(offset..offset + n)
            .ok_or_else(|| bad("payload shorter than declared shapes".into()))?
            .to_vec();
        offset += n;
        tensors.push(Tensor::new(entry.shape.clone(), data)?);
    }
    if offset != payload.len() {
        return Err(bad(format!("{} trailing payload values", payload.len() - offset)));
    }
    let wo = tensors.pop().unwrap();
    let wh = tensors.pop().unwrap();
    let wi = tensors.pop().unwrap();
    let cell = LstmParams::new(wi, wh, wo)?;
    let model = match (header.model_kind, &header.grid) {
        (ModelKind::Lstm, None) => Model::Lstm(cell),
        (ModelKind::Grid, Some(g)) => Model::Grid(GridModelParams::new(cell, g.rows, g.cols)?),
        _ => return Err(bad("grid extents present iff model kind is grid".into())),
    };
    Ok((model, header))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn files_hold_exactly_three_tensors_and_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for model in [
            Model::Lstm(LstmParams::init_uniform(2, 5, 2, &mut rng)),
            Model::Grid(GridModelParams::init_uniform(3, 4, 2, &mut rng)),
        ] {
            let p = dir.path().join(format!("{}.atp", model.kind()));
            save_model(&p, &model, Precision::F64, "abc", serde_json::json!({"seed": 1})).unwrap();
            let (back, header) = load_model(&p).unwrap();
            assert_eq!(back, model);
            assert_eq!(header.tensors.len(), 3);
            let names: Vec<_> = header.tensors.iter().map(|t| t.name.as_str()).collect();
            assert_eq!(names, TENSOR_NAMES);
            assert_eq!(header.config_hash, "abc");
        }
    }

    #[test]
    fn f32_files_are_smaller_and_close() {
        let dir = tempfile::tempdir().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let model = Model::Lstm(LstmParams::init_uniform(1, 8, 1, &mut rng));
        let p64 = dir.path().join("a.atp");
        let p32 = dir.path().join("b.atp");
        save_model(&p64, &model, Precision::F64, "", serde_json::Value::Null).unwrap();
        save_model(&p32, &model, Precision::F32, "", serde_json::Value::Null).unwrap();
        assert!(std::fs::metadata(&p32).unwrap().len() < std::fs::metadata(&p64).unwrap().len());
        let (m32, h) = load_model(&p32).unwrap();
        assert_eq!(h.precision, Precision::F32);
        for (a, b) in m32.cell().tensors().iter().zip(model.cell().tensors()) {
            for (x, y) in a.data().iter().zip(b.data()) {
                assert!((x - y).abs() < 1e-7);
            }
        }
    }
}
