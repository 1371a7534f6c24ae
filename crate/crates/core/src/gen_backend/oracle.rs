//! Built-in synthetic generators with known ground-truth factors.
//!
//! Two render kinds:
//! - `OracleLinear`: the image is a factor-weighted sum of disjoint row
//!   bands, one band per factor. Analytically tractable, 8x8 grayscale.
//! - `OracleShapes`: a soft-edged colored square (x, y, size, hue) on a
//!   black 64x64 RGB canvas. Visually realistic, still differentiable.
//!
//! Both share the latent model `z = R f + b` with `f` uniform on the unit
//! box. When `entangle` is false, `R = I` and `b = 0`, so the latent axes
//! are exactly the factor axes. When true, `R` is a seeded random rotation
//! and `b` a small seeded offset, so factor recovery is a real inversion
//! problem with a known answer.

use ndarray::{Array1, Array2, Array3};
use rand::Rng;
use rand_distr::StandardNormal;
use sha2::{Digest, Sha256};

use crate::error::{DiscoError, Result};
use crate::rng::seed_stream;

use super::Image;

/// Logistic edge softness of the shapes square, in pixels.
const EDGE_SOFTNESS: f64 = 1.0;
/// Side length range of the shapes square, in pixels.
const SIDE_MIN: f64 = 10.0;
const SIDE_MAX: f64 = 32.0;
/// Hue range in degrees; kept below 360 so hue is injective.
const HUE_SPAN: f64 = 300.0;

/// Latent model shared by both oracle kinds: `z = R f + b`, `f in [0,1]^K`.
#[derive(Clone, Debug)]
pub struct OracleCore {
    k: usize,
    /// Orthogonal mixing matrix (identity when not entangled).
    mixing: Array2<f64>,
    offset: Array1<f64>,
    entangled: bool,
}

impl OracleCore {
    pub fn new(k: usize, mixing_seed: u64, entangle: bool) -> Result<Self> {
        if !(2..=8).contains(&k) {
            return Err(DiscoError::Config(format!(
                "oracle factor count must be in 2..=8, got {k}"
            )));
        }
        if entangle {
            let mut rng = seed_stream(mixing_seed, "oracle-mixing");
            let mut raw = Array2::<f64>::zeros((k, k));
            for v in raw.iter_mut() {
                *v = rng.sample(StandardNormal);
            }
            let mixing = gram_schmidt_columns(&raw).ok_or_else(|| {
                DiscoError::Config("mixing seed produced a singular matrix".into())
            })?;
            let mut offset = Array1::<f64>::zeros(k);
            for v in offset.iter_mut() {
                *v = rng.gen_range(-0.25..0.25);
            }
            Ok(Self { k, mixing, offset, entangled: true })
        } else {
            Ok(Self {
                k,
                mixing: Array2::eye(k),
                offset: Array1::zeros(k),
                entangled: false,
            })
        }
    }

    pub fn factor_count(&self) -> usize {
        self.k
    }

    pub fn entangled(&self) -> bool {
        self.entangled
    }

    /// The orthogonal mixing matrix `R`; its columns are the ground-truth
    /// disentangled directions in latent space.
    pub fn mixing(&self) -> &Array2<f64> {
        &self.mixing
    }

    /// `f = clip(R^T (z - b), 0, 1)`.
    pub fn factors_from_latent(&self, z: &Array1<f64>) -> Array1<f64> {
        let raw = self.mixing.t().dot(&(z - &self.offset));
        raw.mapv(|v| v.clamp(0.0, 1.0))
    }

    /// Raw (unclipped) factor coordinates; used for saturation masks.
    fn raw_factors(&self, z: &Array1<f64>) -> Array1<f64> {
        self.mixing.t().dot(&(z - &self.offset))
    }

    /// `z = R f + b`.
    pub fn latent_from_factors(&self, f: &Array1<f64>) -> Array1<f64> {
        self.mixing.dot(f) + &self.offset
    }

    /// One latent sample: `f ~ U[0,1]^K` pushed through the mixing map.
    pub fn sample_latent<R: Rng>(&self, rng: &mut R) -> Array1<f64> {
        let f = Array1::from_iter((0..self.k).map(|_| rng.gen_range(0.0..1.0)));
        self.latent_from_factors(&f)
    }

    /// Pull an image-factor gradient back to the latent:
    /// `g_z = R diag(active) g_f` where `active` masks saturated factors.
    fn vjp_factors(&self, z: &Array1<f64>, grad_f: &Array1<f64>) -> Array1<f64> {
        let raw = self.raw_factors(z);
        let masked = Array1::from_iter(
            raw.iter()
                .zip(grad_f.iter())
                .map(|(&r, &g)| if r > 0.0 && r < 1.0 { g } else { 0.0 }),
        );
        self.mixing.dot(&masked)
    }

    fn digest_into(&self, hasher: &mut Sha256) {
        hasher.update((self.k as u64).to_le_bytes());
        hasher.update([self.entangled as u8]);
        for v in self.mixing.iter().chain(self.offset.iter()) {
            hasher.update(v.to_le_bytes());
        }
    }
}

/// Modified Gram-Schmidt on columns; `None` if a column degenerates.
pub(crate) fn gram_schmidt_columns(m: &Array2<f64>) -> Option<Array2<f64>> {
    let (rows, cols) = m.dim();
    let mut q = m.clone();
    for j in 0..cols {
        for i in 0..j {
            let dot: f64 = (0..rows).map(|r| q[[r, i]] * q[[r, j]]).sum();
            for r in 0..rows {
                q[[r, j]] -= dot * q[[r, i]];
            }
        }
        let norm: f64 = (0..rows).map(|r| q[[r, j]] * q[[r, j]]).sum::<f64>().sqrt();
        if norm < 1e-12 {
            return None;
        }
        for r in 0..rows {
            q[[r, j]] /= norm;
        }
    }
    Some(q)
}

// ── linear oracle ───────────────────────────────────────────────────────────

/// 8x8 grayscale render: row band `k` carries the constant value `f_k`.
/// Bands are disjoint, hence the basis patterns are orthogonal.
#[derive(Clone, Debug)]
pub struct LinearOracle {
    pub core: OracleCore,
    height: usize,
    width: usize,
}

pub const LINEAR_ORACLE_SIDE: usize = 8;

impl LinearOracle {
    pub fn new(core: OracleCore) -> Self {
        Self { core, height: LINEAR_ORACLE_SIDE, width: LINEAR_ORACLE_SIDE }
    }

    pub fn image_shape(&self) -> (usize, usize, usize) {
        (self.height, self.width, 1)
    }

    /// Row range of factor `k`'s band.
    fn band(&self, k: usize) -> (usize, usize) {
        let kk = self.core.factor_count();
        (k * self.height / kk, (k + 1) * self.height / kk)
    }

    pub fn render(&self, z: &Array1<f64>) -> Image {
        let f = self.core.factors_from_latent(z);
        let mut img = Array3::zeros((self.height, self.width, 1));
        for k in 0..self.core.factor_count() {
            let (lo, hi) = self.band(k);
            for r in lo..hi {
                for c in 0..self.width {
                    img[[r, c, 0]] = f[k];
                }
            }
        }
        img
    }

    pub fn vjp(&self, z: &Array1<f64>, grad_img: &Image) -> Array1<f64> {
        let mut grad_f = Array1::zeros(self.core.factor_count());
        for k in 0..self.core.factor_count() {
            let (lo, hi) = self.band(k);
            let mut acc = 0.0;
            for r in lo..hi {
                for c in 0..self.width {
                    acc += grad_img[[r, c, 0]];
                }
            }
            grad_f[k] = acc;
        }
        self.core.vjp_factors(z, &grad_f)
    }
}

// ── shapes oracle ───────────────────────────────────────────────────────────

/// 64x64 RGB render of a soft-edged square. Factor order: x, y, size, hue;
/// factors beyond the count fall back to centered/mid-size/hue-zero.
#[derive(Clone, Debug)]
pub struct ShapesOracle {
    pub core: OracleCore,
    side: usize,
}

pub const SHAPES_ORACLE_SIDE: usize = 64;

struct SquareGeometry {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
    extent: f64,
    color: [f64; 3],
    dcolor_dhue: [f64; 3],
}

impl ShapesOracle {
    pub fn new(core: OracleCore) -> Result<Self> {
        if core.factor_count() > 4 {
            return Err(DiscoError::Config(format!(
                "oracle_shapes supports at most 4 factors (x, y, size, hue), got {}",
                core.factor_count()
            )));
        }
        Ok(Self { core, side: SHAPES_ORACLE_SIDE })
    }

    pub fn image_shape(&self) -> (usize, usize, usize) {
        (self.side, self.side, 3)
    }

    fn geometry(&self, f: &Array1<f64>) -> SquareGeometry {
        let k = self.core.factor_count();
        let fx = f[0];
        let fy = f[1];
        let fsize = if k > 2 { f[2] } else { 0.5 };
        let fhue = if k > 3 { f[3] } else { 0.0 };
        let extent = SIDE_MIN + fsize * (SIDE_MAX - SIDE_MIN);
        let free = self.side as f64 - extent;
        let x0 = fx * free;
        let y0 = fy * free;
        let (color, dcolor_dhue) = hue_to_rgb(fhue * HUE_SPAN);
        SquareGeometry { x0, x1: x0 + extent, y0, y1: y0 + extent, extent, color, dcolor_dhue }
    }

    pub fn render(&self, z: &Array1<f64>) -> Image {
        let f = self.core.factors_from_latent(z);
        let g = self.geometry(&f);
        let mut img = Array3::zeros((self.side, self.side, 3));
        for py in 0..self.side {
            let cy = py as f64 + 0.5;
            let sy = logistic((cy - g.y0) / EDGE_SOFTNESS) * logistic((g.y1 - cy) / EDGE_SOFTNESS);
            for px in 0..self.side {
                let cx = px as f64 + 0.5;
                let sx =
                    logistic((cx - g.x0) / EDGE_SOFTNESS) * logistic((g.x1 - cx) / EDGE_SOFTNESS);
                let cov = sx * sy;
                for ch in 0..3 {
                    img[[py, px, ch]] = cov * g.color[ch];
                }
            }
        }
        img
    }

    pub fn vjp(&self, z: &Array1<f64>, grad_img: &Image) -> Array1<f64> {
        let k = self.core.factor_count();
        let f = self.core.factors_from_latent(z);
        let g = self.geometry(&f);
        let free = self.side as f64 - g.extent;
        let dside = SIDE_MAX - SIDE_MIN;

        // Accumulate gradients on the edge coordinates and on hue, then
        // chain to the factor parameterization.
        let (mut gx0, mut gx1, mut gy0, mut gy1, mut ghue_deg) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for py in 0..self.side {
            let cy = py as f64 + 0.5;
            let ly0 = logistic((cy - g.y0) / EDGE_SOFTNESS);
            let ly1 = logistic((g.y1 - cy) / EDGE_SOFTNESS);
            let sy = ly0 * ly1;
            for px in 0..self.side {
                let cx = px as f64 + 0.5;
                let lx0 = logistic((cx - g.x0) / EDGE_SOFTNESS);
                let lx1 = logistic((g.x1 - cx) / EDGE_SOFTNESS);
                let sx = lx0 * lx1;
                let cov = sx * sy;

                let mut gcol_dot = 0.0;
                let mut ghue_pixel = 0.0;
                for ch in 0..3 {
                    let gp = grad_img[[py, px, ch]];
                    gcol_dot += gp * g.color[ch];
                    ghue_pixel += gp * g.dcolor_dhue[ch];
                }
                ghue_deg += cov * ghue_pixel;

                // dcov/dx0 = -lx0'(..)/beta * lx1 * sy, etc.
                let dlx0 = lx0 * (1.0 - lx0) / EDGE_SOFTNESS;
                let dlx1 = lx1 * (1.0 - lx1) / EDGE_SOFTNESS;
                let dly0 = ly0 * (1.0 - ly0) / EDGE_SOFTNESS;
                let dly1 = ly1 * (1.0 - ly1) / EDGE_SOFTNESS;
                gx0 += gcol_dot * (-dlx0) * lx1 * sy;
                gx1 += gcol_dot * dlx1 * lx0 * sy;
                gy0 += gcol_dot * (-dly0) * ly1 * sx;
                gy1 += gcol_dot * dly1 * ly0 * sx;
            }
        }

        let mut grad_f = Array1::zeros(k);
        grad_f[0] = (gx0 + gx1) * free;
        grad_f[1] = (gy0 + gy1) * free;
        if k > 2 {
            // x0 = f0 (S - side), x1 = x0 + side with side affine in f2.
            grad_f[2] = gx0 * (-f[0] * dside)
                + gx1 * ((1.0 - f[0]) * dside)
                + gy0 * (-f[1] * dside)
                + gy1 * ((1.0 - f[1]) * dside);
        }
        if k > 3 {
            grad_f[3] = ghue_deg * HUE_SPAN;
        }
        self.core.vjp_factors(z, &grad_f)
    }
}

fn logistic(t: f64) -> f64 {
    1.0 / (1.0 + (-t).exp())
}

/// HSV -> RGB at full saturation and value, plus d(rgb)/d(hue in degrees).
fn hue_to_rgb(h_deg: f64) -> ([f64; 3], [f64; 3]) {
    let h = h_deg.clamp(0.0, HUE_SPAN);
    let seg = (h / 60.0).floor().min(4.0) as usize;
    let t = h / 60.0 - seg as f64;
    let d = 1.0 / 60.0;
    // Per 60-degree segment exactly one channel ramps up or down.
    match seg {
        0 => ([1.0, t, 0.0], [0.0, d, 0.0]),
        1 => ([1.0 - t, 1.0, 0.0], [-d, 0.0, 0.0]),
        2 => ([0.0, 1.0, t], [0.0, 0.0, d]),
        3 => ([0.0, 1.0 - t, 1.0], [0.0, -d, 0.0]),
        _ => ([t, 0.0, 1.0], [d, 0.0, 0.0]),
    }
}

pub(crate) fn digest_linear(oracle: &LinearOracle) -> [u8; 32] {
    let mut hasher = Sha256::new();
    hasher.update(b"oracle_linear");
    oracle.core.digest_into(&mut hasher);
    hasher.finalize().into()
}

pub(crate) fn digest_shapes(oracle: &ShapesOracle) -> [u8; 32] {
    let mut hasher = Sha256::new();
    hasher.update(b"oracle_shapes");
    oracle.core.digest_into(&mut hasher);
    hasher.finalize().into()
}
