//! Model files.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! "TOCR" | version: u32 | header_len: u32 | header: UTF-8 JSON | payload
//! ```
//!
//! The header holds the network description and a tensor index whose
//! offsets are relative to the start of the payload. The payload is the raw
//! `f32` tensors in index order.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::params::{Init, LayerParams, ParamSet};
use crate::spec::NetworkSpec;
use crate::tensor::Tensor;
use crate::train::Model;
use crate::{NnError, Result};

pub const MAGIC: &[u8; 4] = b"TOCR";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    layer: usize,
    shape: Vec<usize>,
    offset: usize,
    len: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    spec: NetworkSpec,
    init: Init,
    seed: u64,
    tensors: Vec<TensorEntry>,
}

pub fn model_to_bytes(spec: &NetworkSpec, params: &ParamSet<f32>) -> Result<Vec<u8>> {
    params.check(spec)?;
    let mut tensors = Vec::new();
    let mut offset = 0;
    for p in &params.layers {
        for (suffix, t) in [("weight", &p.weight), ("bias", &p.bias)] {
            tensors.push(TensorEntry {
                name: format!("layer{}.{suffix}", p.layer),
                layer: p.layer,
                shape: t.shape().to_vec(),
                offset,
                len: t.len(),
            });
            offset += t.len() * 4;
        }
    }
    let header = serde_json::to_vec(&Header {
        spec: spec.clone(),
        init: params.init,
        seed: params.seed,
        tensors,
    })?;
    let mut out = Vec::with_capacity(12 + header.len() + offset);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(&header);
    for t in params.tensors() {
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

fn read_u32(bytes: &[u8], at: usize) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_le_bytes(b.try_into().expect("4 bytes")))
        .ok_or_else(|| NnError::Load("truncated file header".into()))
}

pub fn model_from_bytes(bytes: &[u8]) -> Result<Model> {
    if bytes.get(..4) != Some(MAGIC.as_slice()) {
        return Err(NnError::Load("bad magic bytes".into()));
    }
    let version = read_u32(bytes, 4)?;
    if version != FORMAT_VERSION {
        return Err(NnError::Load(format!(
            "unsupported format version {version} (expected {FORMAT_VERSION})"
        )));
    }
    let header_len = read_u32(bytes, 8)? as usize;
    let header_bytes = bytes
        .get(12..12 + header_len)
        .ok_or_else(|| NnError::Load("truncated header".into()))?;
    let header: Header = serde_json::from_slice(header_bytes)
        .map_err(|e| NnError::Load(format!("bad header: {e}")))?;
    let payload = &bytes[12 + header_len..];

    let mut layers: Vec<LayerParams<f32>> = Vec::new();
    let mut expected_offset = 0;
    for pair in header.tensors.chunks(2) {
        let [w, b] = pair else {
            return Err(NnError::Load("tensor index is not weight/bias pairs".into()));
        };
        let mut read = |e: &TensorEntry| -> Result<Tensor<f32>> {
            if e.offset != expected_offset || e.shape.iter().product::<usize>() != e.len {
                return Err(NnError::Load(format!("inconsistent index entry {}", e.name)));
            }
            let raw = payload
                .get(e.offset..e.offset + e.len * 4)
                .ok_or_else(|| NnError::Load(format!("truncated payload at {}", e.name)))?;
            expected_offset += e.len * 4;
            let data = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
                .collect();
            Tensor::from_vec(&e.shape, data)
        };
        let weight = read(w)?;
        let bias = read(b)?;
        layers.push(LayerParams {
            layer: w.layer,
            weight,
            bias,
        });
    }
    if expected_offset != payload.len() {
        return Err(NnError::Load(format!(
            "{} trailing payload bytes",
            payload.len() - expected_offset
        )));
    }
    let params = ParamSet {
        layers,
        init: header.init,
        seed: header.seed,
    };
    params
        .check(&header.spec)
        .map_err(|e| NnError::Load(e.to_string()))?;
    Ok(Model {
        spec: header.spec,
        params,
    })
}

pub fn save_model(spec: &NetworkSpec, params: &ParamSet<f32>, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, model_to_bytes(spec, params)?)?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<Model> {
    model_from_bytes(&fs::read(path)?)
}
