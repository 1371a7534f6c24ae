//! Objective terms over variation-space samples: the NCE and BCE contrastive
//! losses, the entropy-based domination regularizer, hard-negative flipping,
//! and the combined objective.
//!
//! All terms are written in minimization form. Every loss comes in a plain
//! and a `_grad` flavor; the latter returns analytic gradients with respect
//! to the query / key vectors, which the trainer then pushes through the
//! contrastor.

use ndarray::Array1;
use serde::{Deserialize, Serialize};

use crate::contrastor::VariationVector;
use crate::error::{DiscoError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossVariant {
    Nce,
    BceLogits,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub variant: LossVariant,
    /// Temperature dividing every dot product.
    pub tau: f64,
    /// Weight of the domination term in the total objective.
    pub lambda: f64,
    /// Flip threshold in post-temperature logit units.
    pub flip_threshold: f64,
    pub flipping_enabled: bool,
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0) {
            return Err(DiscoError::Config(format!("temperature must be > 0, got {}", self.tau)));
        }
        if self.lambda < 0.0 || !self.lambda.is_finite() {
            return Err(DiscoError::Config(format!(
                "domination weight must be finite and >= 0, got {}",
                self.lambda
            )));
        }
        if self.flip_threshold.is_nan() {
            return Err(DiscoError::Config("flip threshold must not be NaN".into()));
        }
        Ok(())
    }
}

/// Per-step loss summary; also the JSON-lines training-log record payload.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub total: f64,
    pub contrastive_part: f64,
    pub domination_part: f64,
    pub flipped_count: usize,
}

/// Gradients w.r.t. each query / positive-key / negative-key vector.
#[derive(Debug, Clone)]
pub struct SetGrads {
    pub gq: Vec<Array1<f64>>,
    pub gpos: Vec<Array1<f64>>,
    pub gneg: Vec<Array1<f64>>,
}

impl SetGrads {
    fn zeros(q: &[Array1<f64>], kpos: &[Array1<f64>], kneg: &[Array1<f64>]) -> Self {
        SetGrads {
            gq: q.iter().map(|v| Array1::zeros(v.len())).collect(),
            gpos: kpos.iter().map(|v| Array1::zeros(v.len())).collect(),
            gneg: kneg.iter().map(|v| Array1::zeros(v.len())).collect(),
        }
    }

    pub fn add_scaled(&mut self, other: &SetGrads, s: f64) {
        for (a, b) in self.gq.iter_mut().zip(other.gq.iter()) {
            a.zip_mut_with(b, |x, y| *x += s * y);
        }
        for (a, b) in self.gpos.iter_mut().zip(other.gpos.iter()) {
            a.zip_mut_with(b, |x, y| *x += s * y);
        }
        for (a, b) in self.gneg.iter_mut().zip(other.gneg.iter()) {
            a.zip_mut_with(b, |x, y| *x += s * y);
        }
    }
}

fn check_sets(q: &[Array1<f64>], kpos: &[Array1<f64>], kneg: &[Array1<f64>], tau: f64) -> Result<()> {
    if !(tau > 0.0) {
        return Err(DiscoError::Config(format!("temperature must be > 0, got {tau}")));
    }
    if q.is_empty() || kpos.is_empty() || kneg.is_empty() {
        return Err(DiscoError::Input("query, positive, and negative sets must be non-empty".into()));
    }
    Ok(())
}

/// Numerically stable `log(sum(exp(x)))`.
fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m.is_infinite() {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Numerically stable `log(1 + exp(x))`.
fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Numerically stable logistic function.
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// InfoNCE-style ratio loss:
/// `-(1/B) sum_i [ LSE_j(q_i.k+_j / tau) - LSE_m(q_i.k-_m / tau) ]`.
pub fn nce_loss(q: &[Array1<f64>], kpos: &[Array1<f64>], kneg: &[Array1<f64>], tau: f64) -> Result<f64> {
    nce_loss_grad(q, kpos, kneg, tau).map(|(l, _)| l)
}

pub fn nce_loss_grad(
    q: &[Array1<f64>],
    kpos: &[Array1<f64>],
    kneg: &[Array1<f64>],
    tau: f64,
) -> Result<(f64, SetGrads)> {
    check_sets(q, kpos, kneg, tau)?;
    let b = q.len() as f64;
    let mut grads = SetGrads::zeros(q, kpos, kneg);
    let mut loss = 0.0;
    for (i, qi) in q.iter().enumerate() {
        let pos_logits: Vec<f64> = kpos.iter().map(|k| qi.dot(k) / tau).collect();
        let neg_logits: Vec<f64> = kneg.iter().map(|k| qi.dot(k) / tau).collect();
        let lse_pos = log_sum_exp(&pos_logits);
        let lse_neg = log_sum_exp(&neg_logits);
        loss -= (lse_pos - lse_neg) / b;
        // d LSE / d logit_j = softmax_j; chain through logit = dot / tau.
        for (j, kj) in kpos.iter().enumerate() {
            let w = (pos_logits[j] - lse_pos).exp() / (tau * b);
            grads.gq[i].zip_mut_with(kj, |g, &k| *g -= w * k);
            grads.gpos[j].zip_mut_with(qi, |g, &qv| *g -= w * qv);
        }
        for (m, km) in kneg.iter().enumerate() {
            let w = (neg_logits[m] - lse_neg).exp() / (tau * b);
            grads.gq[i].zip_mut_with(km, |g, &k| *g += w * k);
            grads.gneg[m].zip_mut_with(qi, |g, &qv| *g += w * qv);
        }
    }
    Ok((loss, grads))
}

/// Binary cross-entropy on logits:
/// `(1/B) sum_i [ sum_j softplus(-a+_ij) + sum_m softplus(a-_im) ]`
/// with `a = dot / tau`; equals the negative log-likelihood of labeling
/// positives 1 and negatives 0.
pub fn bce_logits_loss(
    q: &[Array1<f64>],
    kpos: &[Array1<f64>],
    kneg: &[Array1<f64>],
    tau: f64,
) -> Result<f64> {
    bce_logits_loss_grad(q, kpos, kneg, tau).map(|(l, _)| l)
}

pub fn bce_logits_loss_grad(
    q: &[Array1<f64>],
    kpos: &[Array1<f64>],
    kneg: &[Array1<f64>],
    tau: f64,
) -> Result<(f64, SetGrads)> {
    let (loss, count, grads) = flipped_core(q, kpos, kneg, tau, f64::INFINITY)?;
    debug_assert_eq!(count, 0);
    Ok((loss, grads))
}

/// BCE with hard-negative flipping: negatives whose logit reaches `t` are
/// re-labeled as pseudo-positives weighted by their (clamped) cosine
/// similarity. `t = +inf` recovers [`bce_logits_loss`] exactly.
pub fn flipped_bce_loss(
    q: &[Array1<f64>],
    kpos: &[Array1<f64>],
    kneg: &[Array1<f64>],
    tau: f64,
    t: f64,
) -> Result<(f64, usize)> {
    flipped_core(q, kpos, kneg, tau, t).map(|(l, c, _)| (l, c))
}

pub fn flipped_bce_loss_grad(
    q: &[Array1<f64>],
    kpos: &[Array1<f64>],
    kneg: &[Array1<f64>],
    tau: f64,
    t: f64,
) -> Result<(f64, usize, SetGrads)> {
    flipped_core(q, kpos, kneg, tau, t)
}

fn flipped_core(
    q: &[Array1<f64>],
    kpos: &[Array1<f64>],
    kneg: &[Array1<f64>],
    tau: f64,
    t: f64,
) -> Result<(f64, usize, SetGrads)> {
    check_sets(q, kpos, kneg, tau)?;
    if t.is_nan() {
        return Err(DiscoError::Config("flip threshold must not be NaN".into()));
    }
    let b = q.len() as f64;
    let mut grads = SetGrads::zeros(q, kpos, kneg);
    let mut loss = 0.0;
    let mut flipped = 0usize;
    for (i, qi) in q.iter().enumerate() {
        for (j, kj) in kpos.iter().enumerate() {
            let a = qi.dot(kj) / tau;
            loss += softplus(-a) / b;
            let da = -sigmoid(-a) / (tau * b);
            grads.gq[i].zip_mut_with(kj, |g, &k| *g += da * k);
            grads.gpos[j].zip_mut_with(qi, |g, &qv| *g += da * qv);
        }
        for (m, km) in kneg.iter().enumerate() {
            let a = qi.dot(km) / tau;
            let da = if a < t {
                loss += softplus(a) / b;
                sigmoid(a) / (tau * b)
            } else {
                flipped += 1;
                // Pseudo-positive with weight w(a) = clamp(a*tau, 0, 1), the
                // raw cosine. The weight itself depends on a, so the full
                // derivative carries a w'(a) term inside the clamp's open
                // interval.
                let cos = a * tau;
                let w = cos.clamp(0.0, 1.0);
                loss += w * softplus(-a) / b;
                let dw = if cos > 0.0 && cos < 1.0 { tau } else { 0.0 };
                (dw * softplus(-a) - w * sigmoid(-a)) / (tau * b)
            };
            grads.gq[i].zip_mut_with(km, |g, &k| *g += da * k);
            grads.gneg[m].zip_mut_with(qi, |g, &qv| *g += da * qv);
        }
    }
    Ok((loss, flipped, grads))
}

/// Entropy-based domination loss: the Shannon entropy of the softmax of the
/// mean of `Q` and `K+`. Minimizing it pushes the mean variation pattern
/// toward one-hot, i.e. one code dimension dominating per direction.
/// Range `[0, ln n]`.
pub fn domination_loss(q: &[Array1<f64>], kpos: &[Array1<f64>]) -> Result<f64> {
    domination_loss_grad(q, kpos).map(|(l, _, _)| l)
}

/// Returns `(loss, grad per q vector, grad per k+ vector)`. All vectors in
/// `Q` and `K+` enter through the same mean, so they share one gradient.
pub fn domination_loss_grad(
    q: &[Array1<f64>],
    kpos: &[Array1<f64>],
) -> Result<(f64, Array1<f64>, Array1<f64>)> {
    if q.is_empty() || kpos.is_empty() {
        return Err(DiscoError::Input("query and positive sets must be non-empty".into()));
    }
    let n = q[0].len();
    if n < 2 {
        return Err(DiscoError::Config(format!(
            "domination loss needs at least 2 code dimensions, got {n}"
        )));
    }
    let count = (q.len() + kpos.len()) as f64;
    let mut c = Array1::<f64>::zeros(n);
    for v in q.iter().chain(kpos.iter()) {
        c.zip_mut_with(v, |a, &b| *a += b / count);
    }
    // Softmax and entropy, stably.
    let cmax = c.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Array1<f64> = c.mapv(|v| (v - cmax).exp());
    let z: f64 = exps.sum();
    let p = exps.mapv(|e| e / z);
    let entropy: f64 = -p.iter().filter(|&&pi| pi > 0.0).map(|&pi| pi * pi.ln()).sum::<f64>();
    // dH/dc_a = -p_a (ln p_a + H); d c / d any member vector = 1/count.
    let gc = p.mapv(|pa| if pa > 0.0 { -pa * (pa.ln() + entropy) } else { 0.0 });
    let per_member = gc.mapv(|g| g / count);
    Ok((entropy, per_member.clone(), per_member))
}

/// Views into a realized contrast batch that the losses consume.
pub struct LossInputs<'a> {
    pub q: &'a [Array1<f64>],
    pub kpos: &'a [Array1<f64>],
    pub kneg: &'a [Array1<f64>],
}

impl<'a> LossInputs<'a> {
    pub fn from_slices(q: &'a [Array1<f64>], kpos: &'a [Array1<f64>], kneg: &'a [Array1<f64>]) -> Self {
        LossInputs { q, kpos, kneg }
    }
}

/// Clone variation vectors out into plain arrays for loss evaluation.
pub fn values_of(set: &[VariationVector]) -> Vec<Array1<f64>> {
    set.iter().map(|v| v.values().clone()).collect()
}

/// Full objective: contrastive term plus `lambda` times the domination term.
pub fn total_loss(inputs: &LossInputs, cfg: &LossConfig) -> Result<LossReport> {
    total_loss_grad(inputs, cfg).map(|(r, _)| r)
}

/// Full objective with gradients w.r.t. every input vector (contrastive and
/// domination contributions already combined).
pub fn total_loss_grad(inputs: &LossInputs, cfg: &LossConfig) -> Result<(LossReport, SetGrads)> {
    cfg.validate()?;
    let (q, kpos, kneg) = (inputs.q, inputs.kpos, inputs.kneg);
    let (contrastive, flipped, mut grads) = match cfg.variant {
        LossVariant::Nce => {
            let (l, g) = nce_loss_grad(q, kpos, kneg, cfg.tau)?;
            (l, 0, g)
        }
        LossVariant::BceLogits => {
            if cfg.flipping_enabled {
                flipped_core(q, kpos, kneg, cfg.tau, cfg.flip_threshold)?
            } else {
                let (l, g) = bce_logits_loss_grad(q, kpos, kneg, cfg.tau)?;
                (l, 0, g)
            }
        }
    };
    let (domination, gq_dom, gpos_dom) = domination_loss_grad(q, kpos)?;
    for g in grads.gq.iter_mut() {
        g.zip_mut_with(&gq_dom, |a, &b| *a += cfg.lambda * b);
    }
    for g in grads.gpos.iter_mut() {
        g.zip_mut_with(&gpos_dom, |a, &b| *a += cfg.lambda * b);
    }
    let report = LossReport {
        total: contrastive + cfg.lambda * domination,
        contrastive_part: contrastive,
        domination_part: domination,
        flipped_count: flipped,
    };
    Ok((report, grads))
}
