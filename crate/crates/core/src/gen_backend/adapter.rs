//! External-checkpoint adapter.
//!
//! A frozen generator is consumed from a checkpoint directory holding
//! `manifest.json` plus backend-native weight files. The manifest declares
//! the latent geometry and, because traversal needs to sample latents, the
//! latent prior explicitly:
//!
//! ```json
//! {
//!   "kind": "linear",
//!   "latent_dim": 8,
//!   "latent_space_tag": "Z",
//!   "image_shape": [16, 16, 1],
//!   "prior": "standard_normal"
//! }
//! ```
//!
//! The `linear` kind (weights `weight.bin` [pixels x latent] and `bias.bin`,
//! f64 little-endian) is the reference implementation of the contract; real
//! backends plug in by implementing the same surface behind a new `kind`.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2, Array3};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{DiscoError, Result};

use super::{Image, LatentPrior, SpaceTag};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdapterManifest {
    pub kind: String,
    pub latent_dim: usize,
    pub latent_space_tag: SpaceTag,
    pub image_shape: (usize, usize, usize),
    pub prior: LatentPrior,
}

/// Reference adapter: `image = clip(W z + b)` reshaped to the declared shape.
#[derive(Clone, Debug)]
pub struct LinearAdapter {
    pub manifest: AdapterManifest,
    weight: Array2<f64>,
    bias: Array1<f64>,
}

impl LinearAdapter {
    pub fn load(dir: &Path) -> Result<Self> {
        let manifest_path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&manifest_path).map_err(|e| {
            DiscoError::Format(format!("cannot read {}: {e}", manifest_path.display()))
        })?;
        let manifest: AdapterManifest = serde_json::from_str(&text)
            .map_err(|e| DiscoError::Format(format!("bad adapter manifest: {e}")))?;
        if manifest.kind != "linear" {
            return Err(DiscoError::Unsupported(format!(
                "unknown adapter kind {:?}",
                manifest.kind
            )));
        }
        let (h, w, c) = manifest.image_shape;
        let pixels = h * w * c;
        if pixels == 0 || manifest.latent_dim == 0 {
            return Err(DiscoError::Format("degenerate adapter geometry".into()));
        }
        let weight_flat = read_f64_le(&dir.join("weight.bin"))?;
        if weight_flat.len() != pixels * manifest.latent_dim {
            return Err(DiscoError::Format(format!(
                "weight.bin holds {} values, expected {}",
                weight_flat.len(),
                pixels * manifest.latent_dim
            )));
        }
        let bias = read_f64_le(&dir.join("bias.bin"))?;
        if bias.len() != pixels {
            return Err(DiscoError::Format(format!(
                "bias.bin holds {} values, expected {pixels}",
                bias.len()
            )));
        }
        let weight = Array2::from_shape_vec((pixels, manifest.latent_dim), weight_flat)
            .expect("shape checked above");
        Ok(Self { manifest, weight, bias: Array1::from(bias) })
    }

    /// Write a linear checkpoint directory (fixture/reference tooling).
    pub fn save(dir: &Path, manifest: &AdapterManifest, weight: &Array2<f64>, bias: &Array1<f64>) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join(MANIFEST_FILE), serde_json::to_string_pretty(manifest)?)?;
        write_f64_le(&dir.join("weight.bin"), weight.iter().copied())?;
        write_f64_le(&dir.join("bias.bin"), bias.iter().copied())?;
        Ok(())
    }

    pub fn render(&self, z: &Array1<f64>) -> Image {
        let raw = self.weight.dot(z) + &self.bias;
        let (h, w, c) = self.manifest.image_shape;
        Array3::from_shape_vec((h, w, c), raw.iter().map(|v| v.clamp(0.0, 1.0)).collect())
            .expect("pixel count matches declared shape")
    }

    pub fn vjp(&self, z: &Array1<f64>, grad_img: &Image) -> Array1<f64> {
        let raw = self.weight.dot(z) + &self.bias;
        let masked = Array1::from_iter(
            raw.iter()
                .zip(grad_img.iter())
                .map(|(&r, &g)| if r > 0.0 && r < 1.0 { g } else { 0.0 }),
        );
        self.weight.t().dot(&masked)
    }

    pub fn digest(&self) -> [u8; 32] {
        let mut hasher = Sha256::new();
        hasher.update(b"external_linear");
        for v in self.weight.iter().chain(self.bias.iter()) {
            hasher.update(v.to_le_bytes());
        }
        hasher.finalize().into()
    }
}

fn read_f64_le(path: &Path) -> Result<Vec<f64>> {
    let bytes = fs::read(path)
        .map_err(|e| DiscoError::Format(format!("cannot read {}: {e}", path.display())))?;
    if bytes.len() % 8 != 0 {
        return Err(DiscoError::Format(format!(
            "{} length {} is not a multiple of 8",
            path.display(),
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect())
}

fn write_f64_le(path: &Path, values: impl Iterator<Item = f64>) -> Result<()> {
    let mut buf = Vec::new();
    for v in values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, buf)?;
    Ok(())
}
