//! The navigator `A`: maps a direction index `d` and shift scalar `eps` to a
//! latent displacement `A(eps * e_d)`.
//!
//! Linear kinds store a `latent_dim x D` matrix whose columns are the
//! candidate directions; the `mlp3` kind runs `eps * e_d` through a small
//! three-layer network. Direction indices are 0-based throughout.

use ndarray::{Array1, Array2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{DiscoError, Result};
use crate::gen_backend::oracle::gram_schmidt_columns;
use crate::nn::{Dense, Layer, NamedTensor, Stack, StackCache, StackGrad};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NavigatorKind {
    UnitColumns,
    Orthonormal,
    Mlp3,
}

#[derive(Debug, Clone)]
enum NavRepr {
    /// latent_dim x D; column d is direction d.
    Linear(Array2<f64>),
    Mlp(Stack),
}

#[derive(Debug, Clone)]
pub struct NavigatorParams {
    kind: NavigatorKind,
    directions: usize,
    latent_dim: usize,
    repr: NavRepr,
}

/// Gradient buffer matching a navigator's parameterization.
#[derive(Debug, Clone)]
pub enum NavigatorGrad {
    Linear(Array2<f64>),
    Mlp(StackGrad),
}

impl NavigatorGrad {
    /// Append in the same order as [`NavigatorParams::write_flat`].
    pub fn write_flat(&self, out: &mut Vec<f64>) {
        match self {
            NavigatorGrad::Linear(m) => out.extend(m.iter()),
            NavigatorGrad::Mlp(g) => g.write_flat(out),
        }
    }
}

/// Forward cache for [`NavigatorParams::shift_train`].
#[derive(Debug, Clone)]
pub struct ShiftCache {
    d: usize,
    eps: f64,
    mlp: Option<StackCache>,
}

/// Build a navigator. Linear kinds start from a random matrix pushed through
/// [`NavigatorParams::project_constraints`]; `mlp3` uses a small random init
/// with hidden width equal to `latent_dim`.
pub fn init_navigator<R: Rng>(
    kind: NavigatorKind,
    directions: usize,
    latent_dim: usize,
    rng: &mut R,
) -> Result<NavigatorParams> {
    if directions == 0 || latent_dim == 0 {
        return Err(DiscoError::Config("navigator needs directions >= 1 and latent_dim >= 1".into()));
    }
    if kind == NavigatorKind::Orthonormal && directions > latent_dim {
        return Err(DiscoError::Config(format!(
            "orthonormal navigator requires D <= latent_dim, got D={directions} > {latent_dim}"
        )));
    }
    let repr = match kind {
        NavigatorKind::UnitColumns | NavigatorKind::Orthonormal => {
            let m = Array2::from_shape_fn((latent_dim, directions), |_| {
                rng.sample::<f64, _>(rand_distr::StandardNormal)
            });
            NavRepr::Linear(m)
        }
        NavigatorKind::Mlp3 => {
            let h = latent_dim;
            NavRepr::Mlp(Stack {
                layers: vec![
                    Layer::Dense(Dense::init(directions, h, rng)),
                    Layer::Tanh,
                    Layer::Dense(Dense::init(h, h, rng)),
                    Layer::Tanh,
                    Layer::Dense(Dense::init(h, latent_dim, rng)),
                ],
            })
        }
    };
    let mut nav = NavigatorParams { kind, directions, latent_dim, repr };
    if kind != NavigatorKind::Mlp3 {
        nav.project_constraints()?;
    }
    Ok(nav)
}

impl NavigatorParams {
    pub fn kind(&self) -> NavigatorKind {
        self.kind
    }

    pub fn directions(&self) -> usize {
        self.directions
    }

    pub fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    /// The direction matrix; linear kinds only.
    pub fn matrix(&self) -> Option<&Array2<f64>> {
        match &self.repr {
            NavRepr::Linear(m) => Some(m),
            NavRepr::Mlp(_) => None,
        }
    }

    fn check_direction(&self, d: usize) -> Result<()> {
        if d >= self.directions {
            return Err(DiscoError::Input(format!(
                "direction index {d} out of range (D = {})",
                self.directions
            )));
        }
        Ok(())
    }

    /// Latent displacement for direction `d` at shift `eps`.
    pub fn shift(&self, d: usize, eps: f64) -> Result<Array1<f64>> {
        self.check_direction(d)?;
        if !eps.is_finite() {
            return Err(DiscoError::Input("shift scalar must be finite".into()));
        }
        Ok(match &self.repr {
            NavRepr::Linear(m) => m.column(d).mapv(|v| v * eps),
            NavRepr::Mlp(stack) => stack.forward(&one_hot_scaled(self.directions, d, eps)),
        })
    }

    /// Forward pass retaining what the backward pass needs.
    pub fn shift_train(&self, d: usize, eps: f64) -> Result<(Array1<f64>, ShiftCache)> {
        self.check_direction(d)?;
        if !eps.is_finite() {
            return Err(DiscoError::Input("shift scalar must be finite".into()));
        }
        Ok(match &self.repr {
            NavRepr::Linear(m) => {
                (m.column(d).mapv(|v| v * eps), ShiftCache { d, eps, mlp: None })
            }
            NavRepr::Mlp(stack) => {
                let (y, cache) = stack.forward_train(&one_hot_scaled(self.directions, d, eps));
                (y, ShiftCache { d, eps, mlp: Some(cache) })
            }
        })
    }

    /// Accumulate the parameter gradient of `g . shift(d, eps)` into `grad`.
    pub fn shift_backward(&self, cache: &ShiftCache, g: &Array1<f64>, grad: &mut NavigatorGrad) {
        match (&self.repr, grad) {
            (NavRepr::Linear(_), NavigatorGrad::Linear(gm)) => {
                for (r, &gv) in g.iter().enumerate() {
                    gm[[r, cache.d]] += cache.eps * gv;
                }
            }
            (NavRepr::Mlp(stack), NavigatorGrad::Mlp(gs)) => {
                let mlp_cache = cache.mlp.as_ref().expect("mlp shift cache");
                stack.backward(mlp_cache, g, gs);
            }
            _ => unreachable!("navigator grad variant mismatch"),
        }
    }

    pub fn grad_zeros(&self) -> NavigatorGrad {
        match &self.repr {
            NavRepr::Linear(m) => NavigatorGrad::Linear(Array2::zeros(m.raw_dim())),
            NavRepr::Mlp(stack) => NavigatorGrad::Mlp(stack.grad_zeros()),
        }
    }

    /// Re-impose the declared column constraint (linear kinds).
    ///
    /// `unit_columns` rescales each column to unit norm; `orthonormal`
    /// re-orthonormalizes via modified Gram-Schmidt. Both are idempotent.
    pub fn project_constraints(&mut self) -> Result<()> {
        let m = match &mut self.repr {
            NavRepr::Linear(m) => m,
            NavRepr::Mlp(_) => {
                return Err(DiscoError::Config(
                    "project_constraints applies only to linear navigator kinds".into(),
                ))
            }
        };
        match self.kind {
            NavigatorKind::UnitColumns => {
                for mut col in m.columns_mut() {
                    let norm = col.dot(&col).sqrt();
                    if norm < 1e-12 {
                        return Err(DiscoError::DegenerateParameter(
                            "navigator column collapsed to zero norm".into(),
                        ));
                    }
                    col.mapv_inplace(|v| v / norm);
                }
            }
            NavigatorKind::Orthonormal => {
                *m = gram_schmidt_columns(m).ok_or_else(|| {
                    DiscoError::DegenerateParameter(
                        "navigator columns became linearly dependent".into(),
                    )
                })?;
            }
            NavigatorKind::Mlp3 => unreachable!(),
        }
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        match &self.repr {
            NavRepr::Linear(m) => m.len(),
            NavRepr::Mlp(s) => s.param_count(),
        }
    }

    pub fn write_flat(&self, out: &mut Vec<f64>) {
        match &self.repr {
            NavRepr::Linear(m) => out.extend(m.iter()),
            NavRepr::Mlp(s) => s.write_flat(out),
        }
    }

    pub fn read_flat(&mut self, src: &[f64]) -> usize {
        match &mut self.repr {
            NavRepr::Linear(m) => {
                for (v, s) in m.iter_mut().zip(src.iter()) {
                    *v = *s;
                }
                m.len()
            }
            NavRepr::Mlp(s) => s.read_flat(src),
        }
    }

    pub fn named_tensors(&self) -> Vec<NamedTensor> {
        match &self.repr {
            NavRepr::Linear(m) => vec![NamedTensor {
                name: "navigator.matrix".into(),
                shape: m.shape().to_vec(),
                data: m.iter().copied().collect(),
            }],
            NavRepr::Mlp(s) => s.named_tensors("navigator.mlp"),
        }
    }

    pub fn load_named_tensors(&mut self, tensors: &[NamedTensor]) -> Result<()> {
        match &mut self.repr {
            NavRepr::Linear(m) => {
                let t = tensors
                    .iter()
                    .find(|t| t.name == "navigator.matrix")
                    .ok_or_else(|| DiscoError::Format("missing tensor `navigator.matrix`".into()))?;
                if t.shape != m.shape() {
                    return Err(DiscoError::Format(format!(
                        "navigator.matrix shape mismatch: stored {:?}, expected {:?}",
                        t.shape,
                        m.shape()
                    )));
                }
                *m = Array2::from_shape_vec((t.shape[0], t.shape[1]), t.data.clone())
                    .map_err(|e| DiscoError::Format(e.to_string()))?;
                Ok(())
            }
            NavRepr::Mlp(s) => s.load_named_tensors("navigator.mlp", tensors),
        }
    }
}

fn one_hot_scaled(dim: usize, d: usize, eps: f64) -> Array1<f64> {
    let mut x = Array1::zeros(dim);
    x[d] = eps;
    x
}
