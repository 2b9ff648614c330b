//! Model file format.
//!
//! ```text
//! offset  size  content
//! 0       8     magic "MLPMODEL"
//! 8       2     format major version, u16 LE (1)
//! 10      2     format minor version, u16 LE
//! 12      4     header length H, u32 LE
//! 16      H     UTF-8 JSON header: layer_sizes, output_activation, scaling, n_params
//! 16+H    8N    N parameters, f64 LE, in the flat order of `MlpModel::params`
//! end-32  32    SHA-256 of every preceding byte
//! ```
//!
//! Readers accept any minor version of a known major version and ignore header keys
//! they do not recognize.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{MlpModel, OutputActivation, Scaling};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"MLPMODEL";
pub const FORMAT_MAJOR: u16 = 1;
pub const FORMAT_MINOR: u16 = 0;

#[derive(Serialize, Deserialize)]
struct Header {
    layer_sizes: Vec<usize>,
    output_activation: OutputActivation,
    scaling: Scaling,
    n_params: usize,
}

pub fn to_bytes(model: &MlpModel) -> Vec<u8> {
    to_bytes_versioned(model, FORMAT_MINOR)
}

fn to_bytes_versioned(model: &MlpModel, minor: u16) -> Vec<u8> {
    let header = serde_json::to_vec(&Header {
        layer_sizes: model.layer_sizes().to_vec(),
        output_activation: model.output_activation(),
        scaling: model.scaling().clone(),
        n_params: model.params().len(),
    })
    .expect("header serializes");
    let mut out = Vec::with_capacity(16 + header.len() + 8 * model.params().len() + 32);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_MAJOR.to_le_bytes());
    out.extend_from_slice(&minor.to_le_bytes());
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(&header);
    for p in model.params() {
        out.extend_from_slice(&p.to_le_bytes());
    }
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    out
}

pub fn from_bytes(bytes: &[u8]) -> Result<MlpModel> {
    let bad = |m: &str| Error::Format(m.to_string());
    if bytes.len() < 16 + 32 {
        return Err(bad("model file is truncated"));
    }
    let (body, digest) = bytes.split_at(bytes.len() - 32);
    if Sha256::digest(body).as_slice() != digest {
        return Err(bad("model file checksum mismatch"));
    }
    if &body[..8] != MAGIC {
        return Err(bad("not a model file"));
    }
    let major = u16::from_le_bytes([body[8], body[9]]);
    if major != FORMAT_MAJOR {
        return Err(Error::Format(format!("unsupported model format version {major}")));
    }
    let header_len = u32::from_le_bytes(body[12..16].try_into().expect("4 bytes")) as usize;
    let header_end = 16usize.checked_add(header_len).filter(|&e| e <= body.len()).ok_or_else(|| bad("header overruns file"))?;
    let header: Header =
        serde_json::from_slice(&body[16..header_end]).map_err(|e| Error::Format(format!("model header: {e}")))?;
    let raw = &body[header_end..];
    if raw.len() != 8 * header.n_params {
        return Err(bad("parameter block size does not match header"));
    }
    let params = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
    MlpModel::from_parts(header.layer_sizes, header.output_activation, params, header.scaling)
        .map_err(|e| Error::Format(format!("inconsistent model: {e}")))
}

pub fn save(model: &MlpModel, path: &Path) -> Result<()> {
    crate::atomic::write(path, &to_bytes(model))
}

pub fn load(path: &Path) -> Result<MlpModel> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(&bytes)
}
