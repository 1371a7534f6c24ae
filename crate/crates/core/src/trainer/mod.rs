//! Training loop: alternating-free, single-objective optimization of the
//! navigator and encoder against a frozen generator.
//!
//! Each step draws one contrast batch, evaluates the objective once, and
//! applies one optimizer update to the navigator and encoder parameters
//! (plus the linear classifier head under the classification ablations).
//! The generator only ever supplies forward images and vector-Jacobian
//! products; its parameters are never touched, which the tests pin via its
//! parameter digest.

pub mod checkpoint;
pub mod optim;

use std::path::Path;

use ndarray::Array1;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::config::{AblationMode, ResolvedConfig};
use crate::contrastor::{
    self, concat_variation_backward, concat_variation_train, init_encoder, variation_backward,
    variation_train, ConcatCache, EncoderParams, VariationCache, VariationVector,
};
use crate::error::{DiscoError, Result};
use crate::gen_backend::GeneratorHandle;
use crate::losses::{total_loss_grad, LossInputs, LossReport, SetGrads};
use crate::navigator::{init_navigator, NavigatorGrad, NavigatorKind, NavigatorParams};
use crate::nn::{Dense, Layer, NamedTensor, Stack, StackGrad};
use crate::rng::seed_stream;
use crate::sampler::{draw_spec, realize_with, BatchSpec, ContrastBatch};
use crate::trainer::checkpoint::{load_checkpoint, save_checkpoint};
use crate::trainer::optim::Optimizer;

/// One line of the JSONL training log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub step: usize,
    #[serde(flatten)]
    pub report: LossReport,
}

/// Everything that evolves during training.
#[derive(Debug, Clone)]
pub struct TrainState {
    config: ResolvedConfig,
    step: usize,
    pub nav: NavigatorParams,
    pub enc: EncoderParams,
    /// Linear classifier head, present only for classification ablations.
    pub head: Option<Stack>,
    rng: ChaCha12Rng,
    optimizer: Optimizer,
}

impl TrainState {
    /// Fresh state: parameters from the `"init"` stream, batches from the
    /// `"train"` stream.
    pub fn init(config: &ResolvedConfig, gen: &GeneratorHandle) -> Result<Self> {
        config.validate(gen)?;
        let mut init_rng = seed_stream(config.trainer.seed, "init");
        let enc = init_encoder(
            config.encoder.preset,
            gen.image_shape(),
            config.encoder.n,
            &mut init_rng,
        )?;
        let nav = init_navigator(
            config.navigator.kind,
            config.navigator.directions,
            gen.latent_dim(),
            &mut init_rng,
        )?;
        let head = if config.trainer.ablation_mode.uses_classifier() {
            let feat = if config.trainer.ablation_mode.uses_concat() {
                2 * config.encoder.n
            } else {
                config.encoder.n
            };
            Some(Stack {
                layers: vec![Layer::Dense(Dense::init(
                    feat,
                    config.navigator.directions,
                    &mut init_rng,
                ))],
            })
        } else {
            None
        };
        let dim = enc.param_count()
            + nav.param_count()
            + head.as_ref().map_or(0, Stack::param_count);
        let optimizer =
            Optimizer::new(config.trainer.optimizer, config.trainer.learning_rate, dim);
        Ok(TrainState {
            config: config.clone(),
            step: 0,
            nav,
            enc,
            head,
            rng: seed_stream(config.trainer.seed, "train"),
            optimizer,
        })
    }

    /// Rebuild state from a checkpoint directory. Optimizer moment buffers
    /// are not part of the checkpoint format and restart at zero.
    pub fn from_checkpoint(dir: &Path, gen: &GeneratorHandle) -> Result<Self> {
        let (manifest, tensors) = load_checkpoint(dir)?;
        let mut state = TrainState::init(&manifest.config, gen)?;
        state.enc.load_named_tensors(&tensors)?;
        state.nav.load_named_tensors(&tensors)?;
        if let Some(head) = &mut state.head {
            head.load_named_tensors("classifier", &tensors)?;
        }
        state.step = manifest.step;
        state.rng = manifest.rng;
        Ok(state)
    }

    pub fn config(&self) -> &ResolvedConfig {
        &self.config
    }

    pub fn step(&self) -> usize {
        self.step
    }

    pub fn param_count(&self) -> usize {
        self.enc.param_count()
            + self.nav.param_count()
            + self.head.as_ref().map_or(0, Stack::param_count)
    }

    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        self.enc.write_flat(&mut out);
        self.nav.write_flat(&mut out);
        if let Some(head) = &self.head {
            head.write_flat(&mut out);
        }
        out
    }

    fn set_flat_params(&mut self, src: &[f64]) {
        let mut i = self.enc.read_flat(src);
        i += self.nav.read_flat(&src[i..]);
        if let Some(head) = &mut self.head {
            i += head.read_flat(&src[i..]);
        }
        debug_assert_eq!(i, src.len());
    }

    /// All trainable tensors in checkpoint order.
    pub fn param_tensors(&self) -> Vec<NamedTensor> {
        let mut out = self.enc.named_tensors();
        out.extend(self.nav.named_tensors());
        if let Some(head) = &self.head {
            out.extend(head.named_tensors("classifier"));
        }
        out
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        save_checkpoint(dir, self.step, &self.config, &self.rng, &self.param_tensors())
    }

    /// One training step: one sampled batch, one objective evaluation, one
    /// update of the navigator and encoder (and classifier head when
    /// present). The generator receives no update.
    pub fn train_step(&mut self, gen: &GeneratorHandle) -> Result<LossReport> {
        let scfg = self.config.sampler.as_sampler_config();
        let spec = draw_spec(&mut self.rng, gen, self.config.navigator.directions, &scfg)?;
        let (report, enc_grads, nav_grad, head_grads) = match self.config.trainer.ablation_mode {
            AblationMode::ContrastVariation => self.contrastive_variation_pass(gen, &spec)?,
            AblationMode::ContrastConcat => self.contrastive_concat_pass(gen, &spec)?,
            AblationMode::ClassifyVariation => self.classification_pass(gen, &spec, false)?,
            AblationMode::ClassifyConcat => self.classification_pass(gen, &spec, true)?,
        };
        if !report.total.is_finite() {
            return Err(DiscoError::NonFiniteLoss {
                step: self.step,
                spec_dump: format!("{spec:?}"),
            });
        }
        let before = self.flat_params();
        let mut params = before.clone();
        let mut grads = Vec::with_capacity(params.len());
        enc_grads.write_flat(&mut grads);
        nav_grad.write_flat(&mut grads);
        if let Some(hg) = &head_grads {
            hg.write_flat(&mut grads);
        }
        self.optimizer.apply(&mut params, &grads)?;
        // A no-op update (e.g. learning rate 0) must leave parameters
        // bitwise unchanged; re-projecting feasible parameters would
        // perturb the last bits, so only project after a real move.
        if params != before {
            self.set_flat_params(&params);
            if self.nav.kind() != NavigatorKind::Mlp3 {
                self.nav.project_constraints()?;
            }
        }
        self.step += 1;
        Ok(report)
    }

    fn contrastive_variation_pass(
        &mut self,
        gen: &GeneratorHandle,
        spec: &BatchSpec,
    ) -> Result<(LossReport, StackGrad, NavigatorGrad, Option<StackGrad>)> {
        let enc = &self.enc;
        let nav = &self.nav;
        let batch: ContrastBatch<VariationCache> =
            realize_with(spec, &mut self.rng, gen, self.config.sampler.eps_max, |z, dir, eps| {
                variation_train(enc, gen, nav, z, dir, eps)
            })?;
        let (q, kpos, kneg) = (batch.q_values(), batch.kpos_values(), batch.kneg_values());
        let (report, grads) =
            total_loss_grad(&LossInputs::from_slices(&q, &kpos, &kneg), &self.config.loss)?;
        if !report.total.is_finite() {
            return Ok((report, self.enc.grad_zeros(), self.nav.grad_zeros(), None));
        }
        let mut enc_grads = self.enc.grad_zeros();
        let mut nav_grad = self.nav.grad_zeros();
        self.backprop_variation(gen, &batch, &grads, &mut enc_grads, &mut nav_grad)?;
        Ok((report, enc_grads, nav_grad, None))
    }

    fn contrastive_concat_pass(
        &mut self,
        gen: &GeneratorHandle,
        spec: &BatchSpec,
    ) -> Result<(LossReport, StackGrad, NavigatorGrad, Option<StackGrad>)> {
        let enc = &self.enc;
        let nav = &self.nav;
        let batch: ContrastBatch<ConcatCache, Array1<f64>> =
            realize_with(spec, &mut self.rng, gen, self.config.sampler.eps_max, |z, dir, eps| {
                concat_variation_train(enc, gen, nav, z, dir, eps)
            })?;
        let (q, kpos, kneg) = (batch.q_values(), batch.kpos_values(), batch.kneg_values());
        let (report, grads) =
            total_loss_grad(&LossInputs::from_slices(&q, &kpos, &kneg), &self.config.loss)?;
        if !report.total.is_finite() {
            return Ok((report, self.enc.grad_zeros(), self.nav.grad_zeros(), None));
        }
        let mut enc_grads = self.enc.grad_zeros();
        let mut nav_grad = self.nav.grad_zeros();
        self.backprop_concat(gen, &batch, &grads, &mut enc_grads, &mut nav_grad)?;
        Ok((report, enc_grads, nav_grad, None))
    }

    /// Classification ablation: a linear head predicts which direction was
    /// traversed; the domination term is omitted.
    fn classification_pass(
        &mut self,
        gen: &GeneratorHandle,
        spec: &BatchSpec,
        concat: bool,
    ) -> Result<(LossReport, StackGrad, NavigatorGrad, Option<StackGrad>)> {
        let head = self
            .head
            .as_ref()
            .ok_or_else(|| DiscoError::Config("classification mode requires a head".into()))?;
        let mut enc_grads = self.enc.grad_zeros();
        let mut nav_grad = self.nav.grad_zeros();
        let mut head_grads = head.grad_zeros();
        let mut total = 0.0;
        let mut count = 0usize;

        if concat {
            let enc = &self.enc;
            let nav = &self.nav;
            let batch: ContrastBatch<ConcatCache, Array1<f64>> = realize_with(
                spec,
                &mut self.rng,
                gen,
                self.config.sampler.eps_max,
                |z, dir, eps| concat_variation_train(enc, gen, nav, z, dir, eps),
            )?;
            for slot in batch.q.iter().chain(batch.kpos.iter()).chain(batch.kneg.iter()) {
                count += 1;
                total += head_ce_backward(head, &slot.v, slot.dir, &mut head_grads, |g_v| {
                    concat_variation_backward(
                        &self.enc,
                        gen,
                        &self.nav,
                        &slot.cache,
                        g_v,
                        &mut enc_grads,
                        &mut nav_grad,
                    )
                })?;
            }
        } else {
            let enc = &self.enc;
            let nav = &self.nav;
            let batch: ContrastBatch<VariationCache> = realize_with(
                spec,
                &mut self.rng,
                gen,
                self.config.sampler.eps_max,
                |z, dir, eps| variation_train(enc, gen, nav, z, dir, eps),
            )?;
            for slot in batch.q.iter().chain(batch.kpos.iter()).chain(batch.kneg.iter()) {
                count += 1;
                total += head_ce_backward(head, slot.v.values(), slot.dir, &mut head_grads, |g_v| {
                    variation_backward(
                        &self.enc,
                        gen,
                        &self.nav,
                        &slot.cache,
                        g_v,
                        &mut enc_grads,
                        &mut nav_grad,
                    )
                })?;
            }
        }

        let mean = total / count as f64;
        // Per-sample CE gradients were accumulated unscaled; fold in 1/count.
        enc_grads.scale(1.0 / count as f64);
        head_grads.scale(1.0 / count as f64);
        scale_nav_grad(&mut nav_grad, 1.0 / count as f64);
        let report = LossReport {
            total: mean,
            contrastive_part: mean,
            domination_part: 0.0,
            flipped_count: 0,
        };
        Ok((report, enc_grads, nav_grad, Some(head_grads)))
    }

    fn backprop_variation(
        &self,
        gen: &GeneratorHandle,
        batch: &ContrastBatch<VariationCache>,
        grads: &SetGrads,
        enc_grads: &mut StackGrad,
        nav_grad: &mut NavigatorGrad,
    ) -> Result<()> {
        for (slot, g) in batch
            .q
            .iter()
            .zip(grads.gq.iter())
            .chain(batch.kpos.iter().zip(grads.gpos.iter()))
            .chain(batch.kneg.iter().zip(grads.gneg.iter()))
        {
            variation_backward(&self.enc, gen, &self.nav, &slot.cache, g, enc_grads, nav_grad)?;
        }
        Ok(())
    }

    fn backprop_concat(
        &self,
        gen: &GeneratorHandle,
        batch: &ContrastBatch<ConcatCache, Array1<f64>>,
        grads: &SetGrads,
        enc_grads: &mut StackGrad,
        nav_grad: &mut NavigatorGrad,
    ) -> Result<()> {
        for (slot, g) in batch
            .q
            .iter()
            .zip(grads.gq.iter())
            .chain(batch.kpos.iter().zip(grads.gpos.iter()))
            .chain(batch.kneg.iter().zip(grads.gneg.iter()))
        {
            concat_variation_backward(
                &self.enc,
                gen,
                &self.nav,
                &slot.cache,
                g,
                enc_grads,
                nav_grad,
            )?;
        }
        Ok(())
    }
}

fn scale_nav_grad(g: &mut NavigatorGrad, s: f64) {
    match g {
        NavigatorGrad::Linear(m) => m.mapv_inplace(|v| v * s),
        NavigatorGrad::Mlp(sg) => sg.scale(s),
    }
}

/// Cross-entropy of the head on one feature vector, with backward through
/// the head (unscaled; caller divides by the slot count) and a callback
/// carrying the feature gradient back into the encoder/navigator.
fn head_ce_backward<F>(
    head: &Stack,
    features: &Array1<f64>,
    label: usize,
    head_grads: &mut StackGrad,
    back_into_features: F,
) -> Result<f64>
where
    F: FnOnce(&Array1<f64>) -> Result<()>,
{
    let (logits, cache) = head.forward_train(features);
    if label >= logits.len() {
        return Err(DiscoError::Input(format!(
            "label {label} out of range for {} logits",
            logits.len()
        )));
    }
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|&x| (x - max).exp()).sum::<f64>().ln();
    let loss = lse - logits[label];
    let mut g_logits: Array1<f64> = logits.mapv(|x| (x - lse).exp());
    g_logits[label] -= 1.0;
    let g_features = head.backward(&cache, &g_logits, head_grads);
    back_into_features(&g_features)?;
    Ok(loss)
}

/// Run the training loop. `on_step` observes every step's report (the CLI
/// streams it to the JSONL log); `checkpoint_dir` receives a checkpoint
/// every `trainer.checkpoint_every` steps and at the end.
pub fn fit<F>(
    config: &ResolvedConfig,
    gen: &GeneratorHandle,
    checkpoint_dir: Option<&Path>,
    mut on_step: F,
) -> Result<TrainState>
where
    F: FnMut(usize, &LossReport) -> Result<()>,
{
    let mut state = TrainState::init(config, gen)?;
    while state.step < config.trainer.steps {
        let report = state.train_step(gen)?;
        on_step(state.step, &report)?;
        if let Some(dir) = checkpoint_dir {
            if state.step % config.trainer.checkpoint_every == 0 {
                state.save(dir)?;
            }
        }
    }
    if let Some(dir) = checkpoint_dir {
        state.save(dir)?;
    }
    Ok(state)
}

/// Convenience wrapper around [`contrastor::variation`] evaluated with a
/// trained state (used by evaluation and visualization code).
pub fn state_variation(
    state: &TrainState,
    gen: &GeneratorHandle,
    z: &crate::gen_backend::LatentCode,
    d: usize,
    eps: f64,
) -> Result<VariationVector> {
    contrastor::variation(&state.enc, gen, &state.nav, z, d, eps)
}
