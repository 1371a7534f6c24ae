//! Minimal dense/conv layer stack with hand-written backpropagation.
//!
//! Everything runs on flat `Array1<f64>` buffers; each layer knows its own
//! input/output geometry. Backward passes *accumulate* into a [`StackGrad`],
//! which is what lets the two shared-weight encoder passes of the
//! Δ-contrastor sum their parameter gradients naturally.

use ndarray::{Array1, Array2, Array4};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{DiscoError, Result};

/// Flat tensor with shape metadata, the unit of checkpoint serialization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl NamedTensor {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone)]
pub struct Dense {
    /// (out_dim, in_dim)
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

impl Dense {
    pub fn init<R: Rng>(in_dim: usize, out_dim: usize, rng: &mut R) -> Self {
        let s = (6.0 / (in_dim + out_dim) as f64).sqrt();
        let w = Array2::from_shape_fn((out_dim, in_dim), |_| rng.gen_range(-s..s));
        Dense { w, b: Array1::zeros(out_dim) }
    }
}

#[derive(Debug, Clone)]
pub struct Conv2d {
    /// (out_c, in_c, k, k)
    pub w: Array4<f64>,
    pub b: Array1<f64>,
    pub in_shape: (usize, usize, usize), // (c, h, w)
    pub stride: usize,
    pub pad: usize,
}

impl Conv2d {
    pub fn init<R: Rng>(
        in_shape: (usize, usize, usize),
        out_c: usize,
        k: usize,
        stride: usize,
        pad: usize,
        rng: &mut R,
    ) -> Self {
        let in_c = in_shape.0;
        let fan_in = in_c * k * k;
        let fan_out = out_c * k * k;
        let s = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let w = Array4::from_shape_fn((out_c, in_c, k, k), |_| rng.gen_range(-s..s));
        Conv2d { w, b: Array1::zeros(out_c), in_shape, stride, pad }
    }

    pub fn out_shape(&self) -> (usize, usize, usize) {
        let (_, h, w) = self.in_shape;
        let k = self.w.dim().2;
        let oh = (h + 2 * self.pad - k) / self.stride + 1;
        let ow = (w + 2 * self.pad - k) / self.stride + 1;
        (self.w.dim().0, oh, ow)
    }
}

#[derive(Debug, Clone)]
pub enum Layer {
    Dense(Dense),
    Conv(Conv2d),
    Tanh,
}

/// Per-layer forward cache: the tensors backward needs.
#[derive(Debug, Clone)]
pub enum LayerCache {
    Input(Array1<f64>),
    Output(Array1<f64>),
}

#[derive(Debug, Clone)]
pub enum LayerGrad {
    Dense { gw: Array2<f64>, gb: Array1<f64> },
    Conv { gw: Array4<f64>, gb: Array1<f64> },
    None,
}

impl Layer {
    pub fn param_count(&self) -> usize {
        match self {
            Layer::Dense(d) => d.w.len() + d.b.len(),
            Layer::Conv(c) => c.w.len() + c.b.len(),
            Layer::Tanh => 0,
        }
    }

    fn forward_into(&self, x: &Array1<f64>) -> Array1<f64> {
        match self {
            Layer::Dense(d) => d.w.dot(x) + &d.b,
            Layer::Conv(c) => conv_forward(c, x),
            Layer::Tanh => x.mapv(f64::tanh),
        }
    }

    fn cache_for(&self, x: &Array1<f64>, y: &Array1<f64>) -> LayerCache {
        match self {
            Layer::Tanh => LayerCache::Output(y.clone()),
            _ => LayerCache::Input(x.clone()),
        }
    }

    fn backward_into(
        &self,
        cache: &LayerCache,
        gy: &Array1<f64>,
        grad: &mut LayerGrad,
    ) -> Array1<f64> {
        match (self, cache, grad) {
            (Layer::Dense(d), LayerCache::Input(x), LayerGrad::Dense { gw, gb }) => {
                for (r, &g) in gy.iter().enumerate() {
                    gb[r] += g;
                    for (c, &xv) in x.iter().enumerate() {
                        gw[[r, c]] += g * xv;
                    }
                }
                d.w.t().dot(gy)
            }
            (Layer::Conv(c), LayerCache::Input(x), LayerGrad::Conv { gw, gb }) => {
                conv_backward(c, x, gy, gw, gb)
            }
            (Layer::Tanh, LayerCache::Output(y), LayerGrad::None) => {
                Array1::from_iter(gy.iter().zip(y.iter()).map(|(&g, &t)| g * (1.0 - t * t)))
            }
            _ => unreachable!("layer/cache/grad variant mismatch"),
        }
    }

    fn grad_zeros(&self) -> LayerGrad {
        match self {
            Layer::Dense(d) => LayerGrad::Dense {
                gw: Array2::zeros(d.w.raw_dim()),
                gb: Array1::zeros(d.b.raw_dim()),
            },
            Layer::Conv(c) => LayerGrad::Conv {
                gw: Array4::zeros(c.w.raw_dim()),
                gb: Array1::zeros(c.b.raw_dim()),
            },
            Layer::Tanh => LayerGrad::None,
        }
    }
}

fn conv_forward(c: &Conv2d, x: &Array1<f64>) -> Array1<f64> {
    let (in_c, h, w) = c.in_shape;
    debug_assert_eq!(x.len(), in_c * h * w);
    let (out_c, oh, ow) = c.out_shape();
    let k = c.w.dim().2;
    let mut y = Array1::zeros(out_c * oh * ow);
    for oc in 0..out_c {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut acc = c.b[oc];
                for ic in 0..in_c {
                    for ky in 0..k {
                        let iy = (oy * c.stride + ky) as isize - c.pad as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        for kx in 0..k {
                            let ix = (ox * c.stride + kx) as isize - c.pad as isize;
                            if ix < 0 || ix >= w as isize {
                                continue;
                            }
                            acc += c.w[[oc, ic, ky, kx]]
                                * x[(ic * h + iy as usize) * w + ix as usize];
                        }
                    }
                }
                y[(oc * oh + oy) * ow + ox] = acc;
            }
        }
    }
    y
}

fn conv_backward(
    c: &Conv2d,
    x: &Array1<f64>,
    gy: &Array1<f64>,
    gw: &mut Array4<f64>,
    gb: &mut Array1<f64>,
) -> Array1<f64> {
    let (in_c, h, w) = c.in_shape;
    let (out_c, oh, ow) = c.out_shape();
    let k = c.w.dim().2;
    let mut gx = Array1::zeros(in_c * h * w);
    for oc in 0..out_c {
        for oy in 0..oh {
            for ox in 0..ow {
                let g = gy[(oc * oh + oy) * ow + ox];
                if g == 0.0 {
                    continue;
                }
                gb[oc] += g;
                for ic in 0..in_c {
                    for ky in 0..k {
                        let iy = (oy * c.stride + ky) as isize - c.pad as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        for kx in 0..k {
                            let ix = (ox * c.stride + kx) as isize - c.pad as isize;
                            if ix < 0 || ix >= w as isize {
                                continue;
                            }
                            let xi = (ic * h + iy as usize) * w + ix as usize;
                            gw[[oc, ic, ky, kx]] += g * x[xi];
                            gx[xi] += g * c.w[[oc, ic, ky, kx]];
                        }
                    }
                }
            }
        }
    }
    gx
}

/// A sequence of layers acting on flat buffers.
#[derive(Debug, Clone)]
pub struct Stack {
    pub layers: Vec<Layer>,
}

pub type StackCache = Vec<LayerCache>;

#[derive(Debug, Clone)]
pub struct StackGrad {
    pub layers: Vec<LayerGrad>,
}

impl Stack {
    pub fn forward(&self, x: &Array1<f64>) -> Array1<f64> {
        let mut cur = x.clone();
        for l in &self.layers {
            cur = l.forward_into(&cur);
        }
        cur
    }

    pub fn forward_train(&self, x: &Array1<f64>) -> (Array1<f64>, StackCache) {
        let mut cur = x.clone();
        let mut caches = Vec::with_capacity(self.layers.len());
        for l in &self.layers {
            let y = l.forward_into(&cur);
            caches.push(l.cache_for(&cur, &y));
            cur = y;
        }
        (cur, caches)
    }

    /// Backpropagate `gy`, accumulating parameter gradients into `grads`
    /// (so repeated calls sum, as shared-weight passes require). Returns the
    /// gradient w.r.t. the stack input.
    pub fn backward(&self, cache: &StackCache, gy: &Array1<f64>, grads: &mut StackGrad) -> Array1<f64> {
        let mut cur = gy.clone();
        for ((l, c), g) in self
            .layers
            .iter()
            .zip(cache.iter())
            .zip(grads.layers.iter_mut())
            .rev()
        {
            cur = l.backward_into(c, &cur, g);
        }
        cur
    }

    pub fn grad_zeros(&self) -> StackGrad {
        StackGrad { layers: self.layers.iter().map(Layer::grad_zeros).collect() }
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Layer::param_count).sum()
    }

    pub fn write_flat(&self, out: &mut Vec<f64>) {
        for l in &self.layers {
            match l {
                Layer::Dense(d) => {
                    out.extend(d.w.iter());
                    out.extend(d.b.iter());
                }
                Layer::Conv(c) => {
                    out.extend(c.w.iter());
                    out.extend(c.b.iter());
                }
                Layer::Tanh => {}
            }
        }
    }

    pub fn read_flat(&mut self, src: &[f64]) -> usize {
        let mut i = 0;
        for l in &mut self.layers {
            match l {
                Layer::Dense(d) => {
                    for v in d.w.iter_mut() {
                        *v = src[i];
                        i += 1;
                    }
                    for v in d.b.iter_mut() {
                        *v = src[i];
                        i += 1;
                    }
                }
                Layer::Conv(c) => {
                    for v in c.w.iter_mut() {
                        *v = src[i];
                        i += 1;
                    }
                    for v in c.b.iter_mut() {
                        *v = src[i];
                        i += 1;
                    }
                }
                Layer::Tanh => {}
            }
        }
        i
    }

    /// Export parameters as named tensors `"{prefix}.{idx}.weight|bias"`.
    pub fn named_tensors(&self, prefix: &str) -> Vec<NamedTensor> {
        let mut out = Vec::new();
        for (i, l) in self.layers.iter().enumerate() {
            match l {
                Layer::Dense(d) => {
                    out.push(NamedTensor {
                        name: format!("{prefix}.{i}.weight"),
                        shape: d.w.shape().to_vec(),
                        data: d.w.iter().copied().collect(),
                    });
                    out.push(NamedTensor {
                        name: format!("{prefix}.{i}.bias"),
                        shape: d.b.shape().to_vec(),
                        data: d.b.to_vec(),
                    });
                }
                Layer::Conv(c) => {
                    out.push(NamedTensor {
                        name: format!("{prefix}.{i}.weight"),
                        shape: c.w.shape().to_vec(),
                        data: c.w.iter().copied().collect(),
                    });
                    out.push(NamedTensor {
                        name: format!("{prefix}.{i}.bias"),
                        shape: c.b.shape().to_vec(),
                        data: c.b.to_vec(),
                    });
                }
                Layer::Tanh => {}
            }
        }
        out
    }

    /// Load parameters previously exported by [`Stack::named_tensors`].
    pub fn load_named_tensors(&mut self, prefix: &str, tensors: &[NamedTensor]) -> Result<()> {
        let find = |name: &str| -> Result<&NamedTensor> {
            tensors
                .iter()
                .find(|t| t.name == name)
                .ok_or_else(|| DiscoError::Format(format!("missing tensor `{name}`")))
        };
        for (i, l) in self.layers.iter_mut().enumerate() {
            let (wname, bname) = (format!("{prefix}.{i}.weight"), format!("{prefix}.{i}.bias"));
            match l {
                Layer::Dense(d) => {
                    let wt = find(&wname)?;
                    let bt = find(&bname)?;
                    if wt.shape != d.w.shape() || bt.shape != b_shape(&d.b) {
                        return Err(DiscoError::Format(format!(
                            "tensor `{wname}` shape mismatch: stored {:?}, expected {:?}",
                            wt.shape,
                            d.w.shape()
                        )));
                    }
                    d.w = Array2::from_shape_vec((wt.shape[0], wt.shape[1]), wt.data.clone())
                        .map_err(|e| DiscoError::Format(e.to_string()))?;
                    d.b = Array1::from(bt.data.clone());
                }
                Layer::Conv(c) => {
                    let wt = find(&wname)?;
                    let bt = find(&bname)?;
                    if wt.shape != c.w.shape() || bt.shape != b_shape(&c.b) {
                        return Err(DiscoError::Format(format!(
                            "tensor `{wname}` shape mismatch: stored {:?}, expected {:?}",
                            wt.shape,
                            c.w.shape()
                        )));
                    }
                    c.w = Array4::from_shape_vec(
                        (wt.shape[0], wt.shape[1], wt.shape[2], wt.shape[3]),
                        wt.data.clone(),
                    )
                    .map_err(|e| DiscoError::Format(e.to_string()))?;
                    c.b = Array1::from(bt.data.clone());
                }
                Layer::Tanh => {}
            }
        }
        Ok(())
    }
}

fn b_shape(b: &Array1<f64>) -> Vec<usize> {
    b.shape().to_vec()
}

impl StackGrad {
    pub fn write_flat(&self, out: &mut Vec<f64>) {
        for g in &self.layers {
            match g {
                LayerGrad::Dense { gw, gb } => {
                    out.extend(gw.iter());
                    out.extend(gb.iter());
                }
                LayerGrad::Conv { gw, gb } => {
                    out.extend(gw.iter());
                    out.extend(gb.iter());
                }
                LayerGrad::None => {}
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        for g in &mut self.layers {
            match g {
                LayerGrad::Dense { gw, gb } => {
                    gw.mapv_inplace(|v| v * s);
                    gb.mapv_inplace(|v| v * s);
                }
                LayerGrad::Conv { gw, gb } => {
                    gw.mapv_inplace(|v| v * s);
                    gb.mapv_inplace(|v| v * s);
                }
                LayerGrad::None => {}
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seed_stream;

    fn fd_check(stack: &Stack, in_dim: usize, seed: u64, tol: f64) {
        let mut rng = seed_stream(seed, "nn-fd");
        let x = Array1::from_iter((0..in_dim).map(|_| rng.gen_range(-1.0..1.0)));
        let (y, cache) = stack.forward_train(&x);
        let gy = Array1::from_iter((0..y.len()).map(|_| rng.gen_range(-1.0..1.0)));
        let mut grads = stack.grad_zeros();
        let gx = stack.backward(&cache, &gy, &mut grads);

        let loss = |s: &Stack, xv: &Array1<f64>| -> f64 {
            s.forward(xv).iter().zip(gy.iter()).map(|(a, b)| a * b).sum()
        };

        // Input gradient.
        let h = 1e-6;
        for i in 0..in_dim.min(8) {
            let mut xp = x.clone();
            xp[i] += h;
            let mut xm = x.clone();
            xm[i] -= h;
            let fd = (loss(stack, &xp) - loss(stack, &xm)) / (2.0 * h);
            let scale = gx[i].abs().max(fd.abs()).max(1.0);
            assert!((gx[i] - fd).abs() / scale < tol, "gx[{i}]: {} vs {fd}", gx[i]);
        }

        // Parameter gradient: probe a scattered subset of flat indices.
        let mut flat = Vec::new();
        stack.write_flat(&mut flat);
        let mut gflat = Vec::new();
        grads.write_flat(&mut gflat);
        assert_eq!(flat.len(), gflat.len());
        let n = flat.len();
        for probe in 0..16 {
            let i = (probe * 2654435761usize) % n;
            let mut sp = stack.clone();
            let mut fp = flat.clone();
            fp[i] += h;
            sp.read_flat(&fp);
            let lp = loss(&sp, &x);
            fp[i] -= 2.0 * h;
            sp.read_flat(&fp);
            let lm = loss(&sp, &x);
            let fd = (lp - lm) / (2.0 * h);
            let scale = gflat[i].abs().max(fd.abs()).max(1.0);
            assert!((gflat[i] - fd).abs() / scale < tol, "param[{i}]: {} vs {fd}", gflat[i]);
        }
    }

    #[test]
    fn dense_tanh_gradients_match_finite_differences() {
        let mut rng = seed_stream(1, "init");
        let stack = Stack {
            layers: vec![
                Layer::Dense(Dense::init(6, 10, &mut rng)),
                Layer::Tanh,
                Layer::Dense(Dense::init(10, 4, &mut rng)),
            ],
        };
        fd_check(&stack, 6, 2, 1e-5);
    }

    #[test]
    fn conv_stack_gradients_match_finite_differences() {
        let mut rng = seed_stream(3, "init");
        let c1 = Conv2d::init((2, 8, 8), 3, 3, 2, 1, &mut rng);
        let s1 = c1.out_shape(); // (3, 4, 4)
        let c2 = Conv2d::init(s1, 4, 3, 2, 1, &mut rng);
        let s2 = c2.out_shape(); // (4, 2, 2)
        let flat = s2.0 * s2.1 * s2.2;
        let stack = Stack {
            layers: vec![
                Layer::Conv(c1),
                Layer::Tanh,
                Layer::Conv(c2),
                Layer::Tanh,
                Layer::Dense(Dense::init(flat, 5, &mut rng)),
            ],
        };
        fd_check(&stack, 2 * 8 * 8, 4, 1e-5);
    }

    #[test]
    fn conv_output_geometry_halves_spatial_side() {
        let mut rng = seed_stream(5, "init");
        let c = Conv2d::init((1, 64, 64), 32, 3, 2, 1, &mut rng);
        assert_eq!(c.out_shape(), (32, 32, 32));
    }

    #[test]
    fn shared_weight_backward_accumulates() {
        let mut rng = seed_stream(7, "init");
        let stack = Stack { layers: vec![Layer::Dense(Dense::init(3, 3, &mut rng))] };
        let x = Array1::from(vec![0.1, -0.2, 0.3]);
        let gy = Array1::from(vec![1.0, 0.5, -0.25]);
        let (_, cache) = stack.forward_train(&x);
        let mut once = stack.grad_zeros();
        stack.backward(&cache, &gy, &mut once);
        let mut twice = stack.grad_zeros();
        stack.backward(&cache, &gy, &mut twice);
        stack.backward(&cache, &gy, &mut twice);
        let (mut f1, mut f2) = (Vec::new(), Vec::new());
        once.write_flat(&mut f1);
        twice.write_flat(&mut f2);
        for (a, b) in f1.iter().zip(f2.iter()) {
            assert!((2.0 * a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn flat_round_trip_and_named_tensors_agree() {
        let mut rng = seed_stream(9, "init");
        let stack = Stack {
            layers: vec![
                Layer::Conv(Conv2d::init((1, 4, 4), 2, 3, 2, 1, &mut rng)),
                Layer::Tanh,
                Layer::Dense(Dense::init(8, 3, &mut rng)),
            ],
        };
        let mut flat = Vec::new();
        stack.write_flat(&mut flat);
        assert_eq!(flat.len(), stack.param_count());

        let tensors = stack.named_tensors("enc");
        let mut restored = stack.clone();
        restored.read_flat(&vec![0.0; flat.len()]);
        restored.load_named_tensors("enc", &tensors).unwrap();
        let mut back = Vec::new();
        restored.write_flat(&mut back);
        assert_eq!(flat, back);
    }

    #[test]
    fn missing_tensor_is_format_error() {
        let mut rng = seed_stream(11, "init");
        let mut stack = Stack { layers: vec![Layer::Dense(Dense::init(2, 2, &mut rng))] };
        let err = stack.load_named_tensors("enc", &[]).unwrap_err();
        assert!(matches!(err, DiscoError::Format(_)));
    }
}
