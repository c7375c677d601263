//! On-disk weight container: a directory with `manifest.json` and
//! `weights.bin` (little-endian `f32`, row-major, no padding).

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ModelConfig, ParameterStore};
use crate::error::{FptError, Result};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const BLOB_FILE: &str = "weights.bin";
const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorEntry {
    pub name: String,
    pub dtype: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContainerManifest {
    pub format_version: u32,
    pub tensors: Vec<TensorEntry>,
}

/// A tensor as stored in a container.
#[derive(Clone, Debug, PartialEq)]
pub struct RawTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f32>,
}

/// Serializes a store to manifest JSON and blob bytes.
pub fn encode_container(store: &ParameterStore) -> (String, Vec<u8>) {
    let mut blob = Vec::with_capacity(store.n_params() * 4);
    let mut tensors = Vec::new();
    for (name, t) in store.tensors() {
        tensors.push(TensorEntry { name, dtype: "f32".into(), shape: t.shape.clone(), offset: blob.len() });
        for v in &t.data {
            blob.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }
    let manifest = ContainerManifest { format_version: FORMAT_VERSION, tensors };
    (serde_json::to_string_pretty(&manifest).expect("manifest serializes"), blob)
}

/// Parses a manifest and slices every tensor out of the blob, without
/// reference to any model configuration.
pub fn decode_tensors(manifest: &str, blob: &[u8]) -> Result<Vec<RawTensor>> {
    let m: ContainerManifest =
        serde_json::from_str(manifest).map_err(|e| FptError::Format(format!("weight manifest: {e}")))?;
    if m.format_version != FORMAT_VERSION {
        return Err(FptError::Format(format!("unsupported format_version {}", m.format_version)));
    }
    let mut seen = BTreeMap::new();
    let mut out = Vec::with_capacity(m.tensors.len());
    for e in m.tensors {
        if e.dtype != "f32" {
            return Err(FptError::Format(format!("{}: unsupported dtype {:?}", e.name, e.dtype)));
        }
        if seen.insert(e.name.clone(), ()).is_some() {
            return Err(FptError::Format(format!("{}: listed twice", e.name)));
        }
        let count = e
            .shape
            .iter()
            .try_fold(1usize, |acc, d| acc.checked_mul(*d))
            .ok_or_else(|| FptError::Format(format!("{}: shape overflows", e.name)))?;
        let end = count
            .checked_mul(4)
            .and_then(|n| n.checked_add(e.offset))
            .filter(|end| *end <= blob.len())
            .ok_or_else(|| FptError::Format(format!("{}: data extends past end of weights.bin", e.name)))?;
        let values: Vec<f32> = blob[e.offset..end]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        if values.iter().any(|v| !v.is_finite()) {
            return Err(FptError::Format(format!("{}: non-finite value", e.name)));
        }
        out.push(RawTensor { name: e.name, shape: e.shape, values });
    }
    Ok(out)
}

/// Decodes a container into a store shaped by `cfg`.
///
/// A tensor the config needs but the manifest lacks is a `Format` error
/// naming it; a shape disagreement is a `Shape` error quoting both shapes.
pub fn decode_container(manifest: &str, blob: &[u8], cfg: &ModelConfig) -> Result<ParameterStore> {
    cfg.validate()?;
    let mut raw: BTreeMap<String, RawTensor> =
        decode_tensors(manifest, blob)?.into_iter().map(|t| (t.name.clone(), t)).collect();
    let mut store = ParameterStore::zeros(cfg);
    for (name, t) in store.tensors_mut() {
        let r = raw.remove(&name).ok_or_else(|| FptError::Format(format!("missing tensor {name}")))?;
        if r.shape != t.shape {
            return Err(FptError::Shape(format!("{name}: expected {:?}, found {:?}", t.shape, r.shape)));
        }
        for (dst, src) in t.data.iter_mut().zip(&r.values) {
            *dst = f64::from(*src);
        }
    }
    if let Some(extra) = raw.keys().next() {
        return Err(FptError::Format(format!("unexpected tensor {extra} for this configuration")));
    }
    Ok(store)
}

pub fn save_weights(store: &ParameterStore, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let (manifest, blob) = encode_container(store);
    std::fs::write(dir.join(MANIFEST_FILE), manifest)?;
    std::fs::write(dir.join(BLOB_FILE), blob)?;
    Ok(())
}

pub fn load_weights(dir: impl AsRef<Path>, cfg: &ModelConfig) -> Result<ParameterStore> {
    let dir = dir.as_ref();
    let manifest = std::fs::read_to_string(dir.join(MANIFEST_FILE))?;
    let blob = std::fs::read(dir.join(BLOB_FILE))?;
    decode_container(&manifest, &blob, cfg)
}
