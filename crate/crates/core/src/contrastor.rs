//! The Δ-contrastor: a shared-weight image encoder `E` plus the difference
//! operator producing normalized variation-space samples
//!
//! ```text
//! v(z, d, eps) = normalize(|E(G(z + A(eps * e_d))) - E(G(z))|)
//! ```
//!
//! Gradients flow to `E` (through both encoder passes, weights shared) and
//! to `A` (through the frozen generator's vector-Jacobian product on the
//! traversed side). `G` itself exposes no trainable parameters.

use ndarray::Array1;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{DiscoError, Result};
use crate::gen_backend::{GeneratorHandle, Image, LatentCode};
use crate::navigator::{NavigatorGrad, NavigatorParams, ShiftCache};
use crate::nn::{Conv2d, Dense, Layer, NamedTensor, Stack, StackCache, StackGrad};

/// Norm below which a difference of encodings counts as degenerate.
pub const DEGENERATE_NORM: f64 = 1e-12;

/// Encoder architecture preset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncoderPreset {
    /// Four stride-2 conv blocks (widths 32/64/128/256) + affine head.
    Conv4,
    /// Two hidden dense layers of width 128; suits small oracle images.
    Mlp,
    /// Single affine map; useful for fixtures and linear probes.
    Linear,
}

#[derive(Debug, Clone)]
pub struct EncoderParams {
    preset: EncoderPreset,
    image_shape: (usize, usize, usize), // (h, w, c)
    out_dim: usize,
    stack: Stack,
}

/// Unit-norm, non-negative variation-space sample.
#[derive(Debug, Clone, PartialEq)]
pub struct VariationVector {
    values: Array1<f64>,
}

impl VariationVector {
    pub fn new(values: Array1<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(DiscoError::Input("variation vector has non-finite entries".into()));
        }
        if values.iter().any(|&v| v < 0.0) {
            return Err(DiscoError::Input("variation vector has negative entries".into()));
        }
        let norm = values.dot(&values).sqrt();
        if (norm - 1.0).abs() > 1e-6 {
            return Err(DiscoError::Input(format!(
                "variation vector norm {norm} is not 1 within 1e-6"
            )));
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &Array1<f64> {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

pub fn init_encoder<R: Rng>(
    preset: EncoderPreset,
    image_shape: (usize, usize, usize),
    out_dim: usize,
    rng: &mut R,
) -> Result<EncoderParams> {
    let (h, w, c) = image_shape;
    if h == 0 || w == 0 || c == 0 || out_dim == 0 {
        return Err(DiscoError::Config("encoder needs non-empty image shape and out_dim >= 1".into()));
    }
    let flat = h * w * c;
    let stack = match preset {
        EncoderPreset::Conv4 => {
            if h != w || h % 16 != 0 {
                return Err(DiscoError::Config(format!(
                    "conv4 preset needs square images with side divisible by 16, got {h}x{w}"
                )));
            }
            let c1 = Conv2d::init((c, h, w), 32, 3, 2, 1, rng);
            let s1 = c1.out_shape();
            let c2 = Conv2d::init(s1, 64, 3, 2, 1, rng);
            let s2 = c2.out_shape();
            let c3 = Conv2d::init(s2, 128, 3, 2, 1, rng);
            let s3 = c3.out_shape();
            let c4 = Conv2d::init(s3, 256, 3, 2, 1, rng);
            let s4 = c4.out_shape();
            let head_in = s4.0 * s4.1 * s4.2;
            Stack {
                layers: vec![
                    Layer::Conv(c1),
                    Layer::Tanh,
                    Layer::Conv(c2),
                    Layer::Tanh,
                    Layer::Conv(c3),
                    Layer::Tanh,
                    Layer::Conv(c4),
                    Layer::Tanh,
                    Layer::Dense(Dense::init(head_in, out_dim, rng)),
                ],
            }
        }
        EncoderPreset::Mlp => Stack {
            layers: vec![
                Layer::Dense(Dense::init(flat, 128, rng)),
                Layer::Tanh,
                Layer::Dense(Dense::init(128, 128, rng)),
                Layer::Tanh,
                Layer::Dense(Dense::init(128, out_dim, rng)),
            ],
        },
        EncoderPreset::Linear => {
            Stack { layers: vec![Layer::Dense(Dense::init(flat, out_dim, rng))] }
        }
    };
    Ok(EncoderParams { preset, image_shape, out_dim, stack })
}

impl EncoderParams {
    pub fn preset(&self) -> EncoderPreset {
        self.preset
    }

    pub fn image_shape(&self) -> (usize, usize, usize) {
        self.image_shape
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    /// Direct access to the underlying stack, for fixture construction.
    pub fn stack_mut(&mut self) -> &mut Stack {
        &mut self.stack
    }

    fn check_image(&self, image: &Image) -> Result<()> {
        if image.dim() != self.image_shape {
            return Err(DiscoError::Input(format!(
                "image shape {:?} does not match encoder input {:?}",
                image.dim(),
                self.image_shape
            )));
        }
        Ok(())
    }

    pub fn encode(&self, image: &Image) -> Result<Array1<f64>> {
        self.check_image(image)?;
        Ok(self.stack.forward(&image_to_flat(image)))
    }

    pub fn encode_train(&self, image: &Image) -> Result<(Array1<f64>, StackCache)> {
        self.check_image(image)?;
        Ok(self.stack.forward_train(&image_to_flat(image)))
    }

    /// Backpropagate a representation gradient; parameter gradients
    /// accumulate into `grads`, the image-space gradient is returned.
    pub fn encode_backward(
        &self,
        cache: &StackCache,
        g_repr: &Array1<f64>,
        grads: &mut StackGrad,
    ) -> Image {
        let flat = self.stack.backward(cache, g_repr, grads);
        flat_to_image(&flat, self.image_shape)
    }

    pub fn grad_zeros(&self) -> StackGrad {
        self.stack.grad_zeros()
    }

    pub fn param_count(&self) -> usize {
        self.stack.param_count()
    }

    pub fn write_flat(&self, out: &mut Vec<f64>) {
        self.stack.write_flat(out)
    }

    pub fn read_flat(&mut self, src: &[f64]) -> usize {
        self.stack.read_flat(src)
    }

    pub fn named_tensors(&self) -> Vec<NamedTensor> {
        self.stack.named_tensors("encoder")
    }

    pub fn load_named_tensors(&mut self, tensors: &[NamedTensor]) -> Result<()> {
        self.stack.load_named_tensors("encoder", tensors)
    }
}

/// Image (h, w, c) -> flat channel-major (c, h, w) buffer.
fn image_to_flat(img: &Image) -> Array1<f64> {
    let (h, w, c) = img.dim();
    let mut out = Array1::zeros(c * h * w);
    for ic in 0..c {
        for y in 0..h {
            for x in 0..w {
                out[(ic * h + y) * w + x] = img[[y, x, ic]];
            }
        }
    }
    out
}

fn flat_to_image(flat: &Array1<f64>, shape: (usize, usize, usize)) -> Image {
    let (h, w, c) = shape;
    let mut out = Image::zeros(shape);
    for ic in 0..c {
        for y in 0..h {
            for x in 0..w {
                out[[y, x, ic]] = flat[(ic * h + y) * w + x];
            }
        }
    }
    out
}

/// Everything the backward pass of one variation sample needs.
#[derive(Debug, Clone)]
pub struct VariationCache {
    z_shifted: LatentCode,
    cache_base: StackCache,
    cache_shifted: StackCache,
    shift_cache: ShiftCache,
    diff: Array1<f64>,
    norm: f64,
    v: Array1<f64>,
}

fn encode_pair_train(
    enc: &EncoderParams,
    gen: &GeneratorHandle,
    nav: &NavigatorParams,
    z: &LatentCode,
    d: usize,
    eps: f64,
) -> Result<(Array1<f64>, StackCache, Array1<f64>, StackCache, LatentCode, ShiftCache)> {
    if eps == 0.0 || !eps.is_finite() {
        return Err(DiscoError::Input("shift scalar must be finite and nonzero".into()));
    }
    let (displacement, shift_cache) = nav.shift_train(d, eps)?;
    let z_shifted = LatentCode { values: &z.values + &displacement, space_tag: z.space_tag };
    let img_base = gen.generate_one(z)?;
    let img_shifted = gen.generate_one(&z_shifted)?;
    let (e_base, cache_base) = enc.encode_train(&img_base)?;
    let (e_shifted, cache_shifted) = enc.encode_train(&img_shifted)?;
    Ok((e_base, cache_base, e_shifted, cache_shifted, z_shifted, shift_cache))
}

/// Normalized absolute-difference variation sample (forward only).
pub fn variation(
    enc: &EncoderParams,
    gen: &GeneratorHandle,
    nav: &NavigatorParams,
    z: &LatentCode,
    d: usize,
    eps: f64,
) -> Result<VariationVector> {
    variation_train(enc, gen, nav, z, d, eps).map(|(v, _)| v)
}

/// Forward pass that also returns the backward cache.
pub fn variation_train(
    enc: &EncoderParams,
    gen: &GeneratorHandle,
    nav: &NavigatorParams,
    z: &LatentCode,
    d: usize,
    eps: f64,
) -> Result<(VariationVector, VariationCache)> {
    let (e_base, cache_base, e_shifted, cache_shifted, z_shifted, shift_cache) =
        encode_pair_train(enc, gen, nav, z, d, eps)?;
    let diff = &e_shifted - &e_base;
    let abs = diff.mapv(f64::abs);
    let norm = abs.dot(&abs).sqrt();
    if norm < DEGENERATE_NORM {
        return Err(DiscoError::DegenerateVariation(format!(
            "encodings identical for direction {d} at shift {eps:.4}"
        )));
    }
    let v = abs.mapv(|a| a / norm);
    Ok((
        VariationVector { values: v.clone() },
        VariationCache { z_shifted, cache_base, cache_shifted, shift_cache, diff, norm, v },
    ))
}

/// Backpropagate a gradient on the variation vector into encoder and
/// navigator parameter buffers. The generator is frozen: only its
/// vector-Jacobian product is used, on the traversed side.
pub fn variation_backward(
    enc: &EncoderParams,
    gen: &GeneratorHandle,
    nav: &NavigatorParams,
    cache: &VariationCache,
    g_v: &Array1<f64>,
    enc_grads: &mut StackGrad,
    nav_grad: &mut NavigatorGrad,
) -> Result<()> {
    // v = a / |a| with a = |diff|: g_a = (g_v - v (v . g_v)) / |a|.
    let vg = cache.v.dot(g_v);
    let g_abs = g_v
        .iter()
        .zip(cache.v.iter())
        .map(|(&g, &vi)| (g - vi * vg) / cache.norm)
        .collect::<Array1<f64>>();
    // a = |diff|: multiply by sign(diff); zero entries get subgradient 0.
    let g_diff = g_abs
        .iter()
        .zip(cache.diff.iter())
        .map(|(&g, &d)| if d > 0.0 { g } else if d < 0.0 { -g } else { 0.0 })
        .collect::<Array1<f64>>();
    let g_base = g_diff.mapv(|g| -g);
    let g_img_shifted = enc.encode_backward(&cache.cache_shifted, &g_diff, enc_grads);
    let _g_img_base = enc.encode_backward(&cache.cache_base, &g_base, enc_grads);
    // Base-side image gradient stops here: z is a sample, not a parameter.
    let g_z_shifted = gen.vjp_latent(&cache.z_shifted, &g_img_shifted)?;
    nav.shift_backward(&cache.shift_cache, &g_z_shifted, nav_grad);
    Ok(())
}

/// Ablation cache for the concatenation variant.
#[derive(Debug, Clone)]
pub struct ConcatCache {
    z_shifted: LatentCode,
    cache_base: StackCache,
    cache_shifted: StackCache,
    shift_cache: ShiftCache,
    n: usize,
}

/// Ablation: concatenate the two raw encodings instead of taking the
/// normalized absolute difference.
pub fn concat_variation(
    enc: &EncoderParams,
    gen: &GeneratorHandle,
    nav: &NavigatorParams,
    z: &LatentCode,
    d: usize,
    eps: f64,
) -> Result<Array1<f64>> {
    concat_variation_train(enc, gen, nav, z, d, eps).map(|(v, _)| v)
}

pub fn concat_variation_train(
    enc: &EncoderParams,
    gen: &GeneratorHandle,
    nav: &NavigatorParams,
    z: &LatentCode,
    d: usize,
    eps: f64,
) -> Result<(Array1<f64>, ConcatCache)> {
    let (e_base, cache_base, e_shifted, cache_shifted, z_shifted, shift_cache) =
        encode_pair_train(enc, gen, nav, z, d, eps)?;
    let diff_norm = e_shifted
        .iter()
        .zip(e_base.iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    if diff_norm < DEGENERATE_NORM {
        return Err(DiscoError::DegenerateVariation(format!(
            "encodings identical for direction {d} at shift {eps:.4}"
        )));
    }
    let n = e_base.len();
    let mut out = Array1::zeros(2 * n);
    out.slice_mut(ndarray::s![..n]).assign(&e_base);
    out.slice_mut(ndarray::s![n..]).assign(&e_shifted);
    Ok((out, ConcatCache { z_shifted, cache_base, cache_shifted, shift_cache, n }))
}

pub fn concat_variation_backward(
    enc: &EncoderParams,
    gen: &GeneratorHandle,
    nav: &NavigatorParams,
    cache: &ConcatCache,
    g_out: &Array1<f64>,
    enc_grads: &mut StackGrad,
    nav_grad: &mut NavigatorGrad,
) -> Result<()> {
    let g_base = g_out.slice(ndarray::s![..cache.n]).to_owned();
    let g_shifted = g_out.slice(ndarray::s![cache.n..]).to_owned();
    let g_img_shifted = enc.encode_backward(&cache.cache_shifted, &g_shifted, enc_grads);
    let _ = enc.encode_backward(&cache.cache_base, &g_base, enc_grads);
    let g_z_shifted = gen.vjp_latent(&cache.z_shifted, &g_img_shifted)?;
    nav.shift_backward(&cache.shift_cache, &g_z_shifted, nav_grad);
    Ok(())
}
