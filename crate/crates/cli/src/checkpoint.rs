//! Model checkpoints.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! b"DRECKPT1"              8 bytes
//! header_len: u64          8 bytes
//! header: JSON             header_len bytes
//! params: [f64; n]         8 * n bytes
//! ```
//!
//! The parameters follow the header's `parameters` list: layer by layer,
//! each layer's weight matrix (row-major, `[out, in]`) followed by its bias.

use std::fs;
use std::path::Path;

use dre_core::autodiff::{ParamSet, Tensor};
use dre_core::scorenet::{ScoreModel, ScoreNetConfig};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const MAGIC: &[u8; 8] = b"DRECKPT1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamEntry {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Header {
    pub network: ScoreNetConfig,
    pub config_hash: String,
    pub seed: u64,
    pub iteration: usize,
    pub parameters: Vec<ParamEntry>,
}

pub struct Checkpoint {
    pub header: Header,
    pub model: ScoreModel,
}

pub fn encode(model: &ScoreModel, config_hash: &str, seed: u64, iteration: usize) -> Vec<u8> {
    let header = Header {
        network: model.config().clone(),
        config_hash: config_hash.to_string(),
        seed,
        iteration,
        parameters: model
            .params()
            .iter()
            .map(|(name, t)| ParamEntry { name: name.to_string(), shape: t.shape().to_vec() })
            .collect(),
    };
    let json = serde_json::to_vec(&header).expect("checkpoint header serializes");
    let flat = model.params().to_flat();
    let mut out = Vec::with_capacity(16 + json.len() + 8 * flat.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for v in flat {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode(bytes: &[u8], path: &Path) -> Result<Checkpoint, CliError> {
    let bad = |detail: &str| CliError::format("checkpoint", path, detail);
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return Err(bad("missing DRECKPT1 magic"));
    }
    let len = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let body = bytes.get(16..16usize.saturating_add(len)).ok_or_else(|| bad("truncated header"))?;
    let header: Header = serde_json::from_slice(body).map_err(|e| CliError::format("checkpoint", path, e))?;
    let blob = &bytes[16 + len..];
    let count: usize = header.parameters.iter().map(|p| p.shape.iter().product::<usize>()).sum();
    if blob.len() != 8 * count {
        return Err(bad(&format!("expected {} parameter bytes, found {}", 8 * count, blob.len())));
    }
    let mut values = blob.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap()));
    let entries = header
        .parameters
        .iter()
        .map(|p| {
            let n = p.shape.iter().product();
            let data: Vec<f64> = values.by_ref().take(n).collect();
            Ok((p.name.clone(), Tensor::new(p.shape.clone(), data)?))
        })
        .collect::<Result<Vec<_>, dre_core::Error>>()?;
    let model = ScoreModel::from_params(header.network.clone(), ParamSet::new(entries)?)?;
    Ok(Checkpoint { header, model })
}

pub fn save(path: &Path, model: &ScoreModel, config_hash: &str, seed: u64, iteration: usize) -> Result<(), CliError> {
    fs::write(path, encode(model, config_hash, seed, iteration)).map_err(|e| CliError::io(path, e))
}

pub fn load(path: &Path) -> Result<Checkpoint, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    decode(&bytes, path)
}
