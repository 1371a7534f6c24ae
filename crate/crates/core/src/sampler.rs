//! Batch construction: one query set `Q`, one positive key set `K+` sharing
//! the query direction, and one negative key set `K-` drawn from the other
//! directions.
//!
//! Drawing is split in two phases so it stays reproducible: [`draw_spec`]
//! consumes the rng in a pinned order (direction, negative directions,
//! latents, shifts), and realization turns each slot into a variation
//! vector, resampling a slot's `(z, eps)` from the same rng stream if its
//! encodings collapse.

use ndarray::Array1;
use rand::Rng;
use rand_chacha::ChaCha12Rng;

use crate::contrastor::{self, EncoderParams, VariationVector};
use crate::error::{DiscoError, Result};
use crate::gen_backend::{GeneratorHandle, LatentCode};
use crate::navigator::NavigatorParams;

/// How many fresh `(z, eps)` draws a degenerate slot gets before the whole
/// batch is abandoned.
pub const RESAMPLE_BUDGET: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplerConfig {
    /// Query count B.
    pub b: usize,
    /// Positive key count N.
    pub n: usize,
    /// Negative key count M.
    pub m: usize,
    /// Shift magnitude bound: eps ~ U[-eps_max, eps_max].
    pub eps_max: f64,
}

impl SamplerConfig {
    pub fn validate(&self, d_count: usize) -> Result<()> {
        if d_count < 2 {
            return Err(DiscoError::Config(format!(
                "need at least 2 directions so negatives exist, got D = {d_count}"
            )));
        }
        if self.b == 0 || self.n == 0 || self.m == 0 {
            return Err(DiscoError::Config("batch sizes B, N, M must all be >= 1".into()));
        }
        if !(self.eps_max > 0.0) {
            return Err(DiscoError::Config(format!(
                "shift bound must be > 0, got {}",
                self.eps_max
            )));
        }
        Ok(())
    }
}

/// All randomness of one batch, before any image is generated.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchSpec {
    /// Shared positive direction for Q and K+.
    pub d: usize,
    /// One direction per negative slot, each != d.
    pub neg_dirs: Vec<usize>,
    pub z_q: Vec<LatentCode>,
    pub z_pos: Vec<LatentCode>,
    pub z_neg: Vec<LatentCode>,
    pub eps_q: Vec<f64>,
    pub eps_pos: Vec<f64>,
    pub eps_neg: Vec<f64>,
}

pub(crate) fn draw_eps<R: Rng>(rng: &mut R, eps_max: f64) -> f64 {
    loop {
        let e = rng.gen_range(-eps_max..eps_max);
        if e != 0.0 {
            return e;
        }
    }
}

/// Uniform draw over `{0..d_count} \ {excluded}` via the index-skip trick.
fn draw_excluding<R: Rng>(rng: &mut R, d_count: usize, excluded: usize) -> usize {
    let t = rng.gen_range(0..d_count - 1);
    if t >= excluded {
        t + 1
    } else {
        t
    }
}

/// Draw a full batch specification: shared direction `d`, negative
/// directions, latents, and shifts.
pub fn draw_spec(
    rng: &mut ChaCha12Rng,
    gen: &GeneratorHandle,
    d_count: usize,
    cfg: &SamplerConfig,
) -> Result<BatchSpec> {
    cfg.validate(d_count)?;
    let d = rng.gen_range(0..d_count);
    let neg_dirs: Vec<usize> = (0..cfg.m).map(|_| draw_excluding(rng, d_count, d)).collect();
    let z_q = gen.sample_latent(cfg.b, rng)?;
    let z_pos = gen.sample_latent(cfg.n, rng)?;
    let z_neg = gen.sample_latent(cfg.m, rng)?;
    let eps_q = (0..cfg.b).map(|_| draw_eps(rng, cfg.eps_max)).collect();
    let eps_pos = (0..cfg.n).map(|_| draw_eps(rng, cfg.eps_max)).collect();
    let eps_neg = (0..cfg.m).map(|_| draw_eps(rng, cfg.eps_max)).collect();
    Ok(BatchSpec { d, neg_dirs, z_q, z_pos, z_neg, eps_q, eps_pos, eps_neg })
}

/// Anything that can sit in a realized contrast slot. The standard path
/// uses [`VariationVector`]; ablations use raw vectors.
pub trait VariationLike {
    fn values(&self) -> &Array1<f64>;
}

impl VariationLike for VariationVector {
    fn values(&self) -> &Array1<f64> {
        VariationVector::values(self)
    }
}

impl VariationLike for Array1<f64> {
    fn values(&self) -> &Array1<f64> {
        self
    }
}

/// One realized slot: the `(z, eps, dir)` actually used (after any
/// resampling) plus its variation vector and a caller-defined cache.
#[derive(Debug, Clone)]
pub struct Realized<C, V = VariationVector> {
    pub z: LatentCode,
    pub eps: f64,
    pub dir: usize,
    pub v: V,
    pub cache: C,
}

/// A fully realized contrast batch.
#[derive(Debug, Clone)]
pub struct ContrastBatch<C = (), V = VariationVector> {
    pub d: usize,
    pub q: Vec<Realized<C, V>>,
    pub kpos: Vec<Realized<C, V>>,
    pub kneg: Vec<Realized<C, V>>,
    /// How many degenerate slots had to be redrawn.
    pub degenerate_resamples: usize,
}

impl<C, V: VariationLike> ContrastBatch<C, V> {
    pub fn q_values(&self) -> Vec<Array1<f64>> {
        self.q.iter().map(|r| r.v.values().clone()).collect()
    }

    pub fn kpos_values(&self) -> Vec<Array1<f64>> {
        self.kpos.iter().map(|r| r.v.values().clone()).collect()
    }

    pub fn kneg_values(&self) -> Vec<Array1<f64>> {
        self.kneg.iter().map(|r| r.v.values().clone()).collect()
    }
}

/// Realize every slot through `realize` (a closure producing the variation
/// vector and any backward cache). Degenerate slots get up to
/// [`RESAMPLE_BUDGET`] fresh `(z, eps)` draws; exceeding the budget is a
/// batch error.
pub fn realize_with<C, V, F>(
    spec: &BatchSpec,
    rng: &mut ChaCha12Rng,
    gen: &GeneratorHandle,
    eps_max: f64,
    mut realize: F,
) -> Result<ContrastBatch<C, V>>
where
    V: VariationLike,
    F: FnMut(&LatentCode, usize, f64) -> Result<(V, C)>,
{
    let mut degenerate = 0usize;
    let mut fill = |z0: &LatentCode,
                    dir: usize,
                    eps0: f64,
                    rng: &mut ChaCha12Rng,
                    degenerate: &mut usize|
     -> Result<Realized<C, V>> {
        let mut z = z0.clone();
        let mut eps = eps0;
        for _ in 0..=RESAMPLE_BUDGET {
            match realize(&z, dir, eps) {
                Ok((v, cache)) => return Ok(Realized { z, eps, dir, v, cache }),
                Err(DiscoError::DegenerateVariation(_)) => {
                    *degenerate += 1;
                    z = gen.sample_latent(1, rng)?.remove(0);
                    eps = draw_eps(rng, eps_max);
                }
                Err(e) => return Err(e),
            }
        }
        Err(DiscoError::Batch(format!(
            "slot on direction {dir} stayed degenerate after {RESAMPLE_BUDGET} resamples"
        )))
    };

    let mut q = Vec::with_capacity(spec.z_q.len());
    for (z, &eps) in spec.z_q.iter().zip(spec.eps_q.iter()) {
        q.push(fill(z, spec.d, eps, rng, &mut degenerate)?);
    }
    let mut kpos = Vec::with_capacity(spec.z_pos.len());
    for (z, &eps) in spec.z_pos.iter().zip(spec.eps_pos.iter()) {
        kpos.push(fill(z, spec.d, eps, rng, &mut degenerate)?);
    }
    let mut kneg = Vec::with_capacity(spec.z_neg.len());
    for ((z, &eps), &dir) in spec.z_neg.iter().zip(spec.eps_neg.iter()).zip(spec.neg_dirs.iter()) {
        kneg.push(fill(z, dir, eps, rng, &mut degenerate)?);
    }
    Ok(ContrastBatch { d: spec.d, q, kpos, kneg, degenerate_resamples: degenerate })
}

/// Realize a batch with the standard variation operator (no backward caches).
pub fn realize_batch(
    spec: &BatchSpec,
    rng: &mut ChaCha12Rng,
    enc: &EncoderParams,
    gen: &GeneratorHandle,
    nav: &NavigatorParams,
    eps_max: f64,
) -> Result<ContrastBatch<()>> {
    realize_with(spec, rng, gen, eps_max, |z, dir, eps| {
        contrastor::variation(enc, gen, nav, z, dir, eps).map(|v| (v, ()))
    })
}
