//! Checkpoint layout: one line of JSON describing the model, then the raw
//! parameters `w1, b1, w2, b2` as little-endian `f64`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{MlpModel, ModelDims, Scaler, TrainConfig};
use crate::error::{Error, Result};

const FORMAT: &str = "wafer-tda-mlp";
const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    dims: ModelDims,
    scaler: Option<Scaler>,
    config: Option<TrainConfig>,
}

pub fn save_model(model: &MlpModel, config: Option<&TrainConfig>, path: &Path) -> Result<()> {
    let header = Header {
        format: FORMAT.into(),
        version: VERSION,
        dims: model.dims,
        scaler: model.scaler.clone(),
        config: config.cloned(),
    };
    let mut bytes = serde_json::to_vec(&header).map_err(|e| Error::json(path, e))?;
    bytes.push(b'\n');
    for p in [&model.w1, &model.b1, &model.w2, &model.b2] {
        for v in p.iter() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: &Path) -> Result<(MlpModel, Option<TrainConfig>)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let bad = |msg: &str| Error::Format(format!("{}: {msg}", path.display()));
    let newline = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| bad("missing header line"))?;
    let header: Header = serde_json::from_slice(&bytes[..newline]).map_err(|e| Error::json(path, e))?;
    if header.format != FORMAT || header.version != VERSION {
        return Err(bad("not a model checkpoint of a supported version"));
    }
    let mut model = MlpModel::zeros(header.dims);
    let payload = &bytes[newline + 1..];
    let expected = 8 * (model.w1.len() + model.b1.len() + model.w2.len() + model.b2.len());
    if payload.len() != expected {
        return Err(bad("weight payload does not match the declared shapes"));
    }
    let mut values = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()));
    for p in [&mut model.w1, &mut model.b1, &mut model.w2, &mut model.b2] {
        p.iter_mut().for_each(|v| *v = values.next().unwrap());
    }
    if let Some(s) = &header.scaler {
        if s.mean.len() != header.dims.input || s.std.len() != header.dims.input {
            return Err(bad("scaler length does not match the input size"));
        }
    }
    model.scaler = header.scaler;
    Ok((model, header.config))
}
