//! Checkpoint directory format.
//!
//! A checkpoint is a directory holding `manifest.json` plus one flat
//! little-endian f64 binary per tensor. The manifest pins the format
//! version, the step counter, the fully resolved config snapshot, the
//! serialized training RNG, the tensor table, and a SHA-256 over all
//! parameter bytes. Nothing time- or host-dependent is written, so two
//! identically configured runs produce byte-identical checkpoints.

use std::fs;
use std::path::Path;

use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::ResolvedConfig;
use crate::error::{DiscoError, Result};
use crate::nn::NamedTensor;

pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
const DTYPE: &str = "f64le";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub dtype: String,
    pub file: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointManifest {
    pub format_version: u32,
    pub step: usize,
    pub config: ResolvedConfig,
    pub rng: ChaCha12Rng,
    pub tensors: Vec<TensorEntry>,
    pub param_sha256: String,
}

fn tensor_bytes(t: &NamedTensor) -> Vec<u8> {
    let mut out = Vec::with_capacity(t.data.len() * 8);
    for v in &t.data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Hex SHA-256 over the concatenated little-endian bytes of every tensor,
/// in the given order. This is the run-determinism fingerprint.
pub fn param_hash(tensors: &[NamedTensor]) -> String {
    let mut h = Sha256::new();
    for t in tensors {
        h.update(tensor_bytes(t));
    }
    let digest = h.finalize();
    let mut hex = String::with_capacity(64);
    for b in digest {
        hex.push_str(&format!("{b:02x}"));
    }
    hex
}

pub fn save_checkpoint(
    dir: &Path,
    step: usize,
    config: &ResolvedConfig,
    rng: &ChaCha12Rng,
    tensors: &[NamedTensor],
) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut entries = Vec::with_capacity(tensors.len());
    for t in tensors {
        if t.data.len() != t.len() {
            return Err(DiscoError::Format(format!(
                "tensor {} has {} values but shape {:?}",
                t.name,
                t.data.len(),
                t.shape
            )));
        }
        let file = format!("{}.bin", t.name);
        fs::write(dir.join(&file), tensor_bytes(t))?;
        entries.push(TensorEntry {
            name: t.name.clone(),
            shape: t.shape.clone(),
            dtype: DTYPE.into(),
            file,
        });
    }
    let manifest = CheckpointManifest {
        format_version: FORMAT_VERSION,
        step,
        config: config.clone(),
        rng: rng.clone(),
        tensors: entries,
        param_sha256: param_hash(tensors),
    };
    let text = serde_json::to_string_pretty(&manifest)?;
    fs::write(dir.join(MANIFEST_FILE), text)?;
    Ok(())
}

pub fn load_checkpoint(dir: &Path) -> Result<(CheckpointManifest, Vec<NamedTensor>)> {
    let manifest_path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&manifest_path).map_err(|e| {
        DiscoError::Format(format!("cannot read {}: {e}", manifest_path.display()))
    })?;
    let manifest: CheckpointManifest = serde_json::from_str(&text)
        .map_err(|e| DiscoError::Format(format!("malformed manifest: {e}")))?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(DiscoError::Format(format!(
            "unsupported checkpoint format version {} (expected {FORMAT_VERSION})",
            manifest.format_version
        )));
    }
    let mut tensors = Vec::with_capacity(manifest.tensors.len());
    for entry in &manifest.tensors {
        if entry.dtype != DTYPE {
            return Err(DiscoError::Format(format!(
                "tensor {} has dtype {} (expected {DTYPE})",
                entry.name, entry.dtype
            )));
        }
        let path = dir.join(&entry.file);
        let bytes = fs::read(&path)
            .map_err(|e| DiscoError::Format(format!("cannot read {}: {e}", path.display())))?;
        let expected: usize = entry.shape.iter().product();
        if bytes.len() != expected * 8 {
            return Err(DiscoError::Format(format!(
                "tensor {} holds {} bytes, expected {}",
                entry.name,
                bytes.len(),
                expected * 8
            )));
        }
        let data: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        tensors.push(NamedTensor { name: entry.name.clone(), shape: entry.shape.clone(), data });
    }
    let actual = param_hash(&tensors);
    if actual != manifest.param_sha256 {
        return Err(DiscoError::Format(format!(
            "parameter hash mismatch: manifest says {}, files hash to {actual}",
            manifest.param_sha256
        )));
    }
    Ok((manifest, tensors))
}
