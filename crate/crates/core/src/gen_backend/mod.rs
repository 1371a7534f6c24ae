//! Uniform interface over frozen generative models `G: Z -> I`.
//!
//! A [`GeneratorHandle`] bundles latent-space metadata with one of three
//! backends: the two synthetic oracles (known ground-truth factors, used for
//! all verification) or an external checkpoint adapter. Handles are
//! immutable after construction; generation is a pure function of
//! `(handle, code)`.

pub mod adapter;
pub mod oracle;

use std::path::Path;

use ndarray::{Array1, Array3};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{DiscoError, Result};

use adapter::LinearAdapter;
use oracle::{LinearOracle, OracleCore, ShapesOracle};

/// Pixel tensor (height, width, channels), values in `[0, 1]`.
pub type Image = Array3<f64>;

/// Which latent space a code lives in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SpaceTag {
    Z,
    W,
}

/// Distribution latents are sampled from. Oracles push a uniform factor box
/// through their mixing map; external checkpoints must declare theirs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LatentPrior {
    StandardNormal,
    FactorBox,
}

/// Backend kind discriminator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    ExternalAdapter,
    OracleLinear,
    OracleShapes,
}

/// Oracle render kind, used when constructing synthetic generators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleKind {
    Linear,
    Shapes,
}

/// A point in a generator's latent space.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentCode {
    pub values: Array1<f64>,
    pub space_tag: SpaceTag,
}

impl LatentCode {
    pub fn new(values: Array1<f64>, space_tag: SpaceTag) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(DiscoError::Input("latent code has non-finite entries".into()));
        }
        Ok(Self { values, space_tag })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

/// Ground-truth factor values in `[0, 1]^K`; oracle backends only.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorVector {
    pub values: Array1<f64>,
}

#[derive(Clone, Debug)]
enum Backend {
    OracleLinear(LinearOracle),
    OracleShapes(ShapesOracle),
    External(LinearAdapter),
}

/// Frozen generator plus its latent metadata.
#[derive(Clone, Debug)]
pub struct GeneratorHandle {
    kind: BackendKind,
    latent_dim: usize,
    space_tag: SpaceTag,
    image_shape: (usize, usize, usize),
    prior: LatentPrior,
    seed: u64,
    backend: Backend,
}

/// Build a synthetic oracle generator with `k` ground-truth factors.
///
/// With `entangle` the latent space is `z = R f + b` for a seeded random
/// rotation `R`, so factor axes are not latent axes; otherwise `z = f`.
pub fn make_oracle_generator(
    k: usize,
    kind: OracleKind,
    mixing_seed: u64,
    entangle: bool,
) -> Result<GeneratorHandle> {
    let core = OracleCore::new(k, mixing_seed, entangle)?;
    let (backend, kind_tag, image_shape) = match kind {
        OracleKind::Linear => {
            let o = LinearOracle::new(core);
            let shape = o.image_shape();
            (Backend::OracleLinear(o), BackendKind::OracleLinear, shape)
        }
        OracleKind::Shapes => {
            let o = ShapesOracle::new(core)?;
            let shape = o.image_shape();
            (Backend::OracleShapes(o), BackendKind::OracleShapes, shape)
        }
    };
    Ok(GeneratorHandle {
        kind: kind_tag,
        latent_dim: k,
        space_tag: SpaceTag::Z,
        image_shape,
        prior: LatentPrior::FactorBox,
        seed: mixing_seed,
        backend,
    })
}

/// Load an external frozen checkpoint directory (see [`adapter`]).
pub fn load_external_generator(dir: &Path) -> Result<GeneratorHandle> {
    let a = LinearAdapter::load(dir)?;
    Ok(GeneratorHandle {
        kind: BackendKind::ExternalAdapter,
        latent_dim: a.manifest.latent_dim,
        space_tag: a.manifest.latent_space_tag,
        image_shape: a.manifest.image_shape,
        prior: a.manifest.prior,
        seed: 0,
        backend: Backend::External(a),
    })
}

impl GeneratorHandle {
    pub fn kind(&self) -> BackendKind {
        self.kind
    }

    pub fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    pub fn space_tag(&self) -> SpaceTag {
        self.space_tag
    }

    pub fn image_shape(&self) -> (usize, usize, usize) {
        self.image_shape
    }

    pub fn prior(&self) -> LatentPrior {
        self.prior
    }

    pub fn construction_seed(&self) -> u64 {
        self.seed
    }

    /// Ground-truth factor count; oracle backends only.
    pub fn factor_count(&self) -> Result<usize> {
        match &self.backend {
            Backend::OracleLinear(o) => Ok(o.core.factor_count()),
            Backend::OracleShapes(o) => Ok(o.core.factor_count()),
            Backend::External(_) => Err(DiscoError::Unsupported(
                "external adapters expose no ground-truth factors".into(),
            )),
        }
    }

    /// The oracle's orthogonal mixing matrix `R` (ground-truth directions).
    pub fn oracle_mixing(&self) -> Result<&ndarray::Array2<f64>> {
        match &self.backend {
            Backend::OracleLinear(o) => Ok(o.core.mixing()),
            Backend::OracleShapes(o) => Ok(o.core.mixing()),
            Backend::External(_) => Err(DiscoError::Unsupported(
                "external adapters have no mixing matrix".into(),
            )),
        }
    }

    fn check_code(&self, code: &LatentCode) -> Result<()> {
        if code.space_tag != self.space_tag {
            return Err(DiscoError::Config(format!(
                "latent code tagged {:?} submitted to a {:?}-space generator",
                code.space_tag, self.space_tag
            )));
        }
        if code.dim() != self.latent_dim {
            return Err(DiscoError::Input(format!(
                "latent code has dimension {}, generator expects {}",
                code.dim(),
                self.latent_dim
            )));
        }
        if code.values.iter().any(|v| !v.is_finite()) {
            return Err(DiscoError::Input("latent code has non-finite entries".into()));
        }
        Ok(())
    }

    /// Render one image per code. Deterministic; pixels in `[0, 1]`.
    pub fn generate(&self, batch: &[LatentCode]) -> Result<Vec<Image>> {
        if batch.is_empty() {
            return Err(DiscoError::Input("generate called with an empty batch".into()));
        }
        batch.iter().map(|code| self.generate_one(code)).collect()
    }

    pub fn generate_one(&self, code: &LatentCode) -> Result<Image> {
        self.check_code(code)?;
        Ok(match &self.backend {
            Backend::OracleLinear(o) => o.render(&code.values),
            Backend::OracleShapes(o) => o.render(&code.values),
            Backend::External(a) => a.render(&code.values),
        })
    }

    /// Draw `count` latent codes from the declared prior.
    pub fn sample_latent<R: Rng>(&self, count: usize, rng: &mut R) -> Result<Vec<LatentCode>> {
        if count == 0 {
            return Err(DiscoError::Input("sample_latent requires count >= 1".into()));
        }
        let mut out = Vec::with_capacity(count);
        for _ in 0..count {
            let values = match (&self.backend, self.prior) {
                (Backend::OracleLinear(o), _) => o.core.sample_latent(rng),
                (Backend::OracleShapes(o), _) => o.core.sample_latent(rng),
                (Backend::External(_), LatentPrior::StandardNormal) => {
                    Array1::from_iter((0..self.latent_dim).map(|_| rng.sample(StandardNormal)))
                }
                (Backend::External(_), LatentPrior::FactorBox) => {
                    Array1::from_iter((0..self.latent_dim).map(|_| rng.gen_range(0.0..1.0)))
                }
            };
            out.push(LatentCode { values, space_tag: self.space_tag });
        }
        Ok(out)
    }

    /// Ground-truth factors `f = clip(R^-1 (z - b), 0, 1)`; oracle only.
    pub fn oracle_true_factors(&self, code: &LatentCode) -> Result<FactorVector> {
        self.check_code(code)?;
        match &self.backend {
            Backend::OracleLinear(o) => {
                Ok(FactorVector { values: o.core.factors_from_latent(&code.values) })
            }
            Backend::OracleShapes(o) => {
                Ok(FactorVector { values: o.core.factors_from_latent(&code.values) })
            }
            Backend::External(_) => Err(DiscoError::Unsupported(
                "oracle_true_factors called on an external adapter".into(),
            )),
        }
    }

    /// Inverse of the oracle latent model, `z = R f + b`; oracle only.
    /// Used by factor-sweep diagnostics.
    pub fn latent_for_factors(&self, factors: &Array1<f64>) -> Result<LatentCode> {
        let core = match &self.backend {
            Backend::OracleLinear(o) => &o.core,
            Backend::OracleShapes(o) => &o.core,
            Backend::External(_) => {
                return Err(DiscoError::Unsupported(
                    "latent_for_factors called on an external adapter".into(),
                ))
            }
        };
        if factors.len() != self.latent_dim {
            return Err(DiscoError::Input(format!(
                "factor vector has length {}, expected {}",
                factors.len(),
                self.latent_dim
            )));
        }
        Ok(LatentCode { values: core.latent_from_factors(factors), space_tag: self.space_tag })
    }

    /// Vector-Jacobian product `(dG/dz)^T g`: pulls an image-space gradient
    /// back to the latent. The generator stays frozen; this is the path
    /// that lets the navigator receive gradients through `G`.
    pub fn vjp_latent(&self, code: &LatentCode, grad_image: &Image) -> Result<Array1<f64>> {
        self.check_code(code)?;
        if grad_image.dim() != self.image_shape {
            return Err(DiscoError::Input(format!(
                "gradient image shape {:?} does not match generator shape {:?}",
                grad_image.dim(),
                self.image_shape
            )));
        }
        Ok(match &self.backend {
            Backend::OracleLinear(o) => o.vjp(&code.values, grad_image),
            Backend::OracleShapes(o) => o.vjp(&code.values, grad_image),
            Backend::External(a) => a.vjp(&code.values, grad_image),
        })
    }

    /// Digest of every frozen constant in the backend; training must leave
    /// this untouched.
    pub fn param_digest(&self) -> [u8; 32] {
        match &self.backend {
            Backend::OracleLinear(o) => oracle::digest_linear(o),
            Backend::OracleShapes(o) => oracle::digest_shapes(o),
            Backend::External(a) => a.digest(),
        }
    }
}
