//! Run configuration: a single JSON document with optional fields whose
//! defaults are materialized by [`RunConfig::resolve`] before any work
//! happens. Checkpoints embed the *resolved* form, so evaluating an old
//! checkpoint never depends on the current build's defaults.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::contrastor::EncoderPreset;
use crate::error::{DiscoError, Result};
use crate::gen_backend::{
    load_external_generator, make_oracle_generator, GeneratorHandle, OracleKind, SpaceTag,
};
use crate::losses::{LossConfig, LossVariant};
use crate::navigator::NavigatorKind;
use crate::sampler::SamplerConfig;

/// Environment variable that anchors relative external checkpoint and
/// dataset paths.
pub const DATA_DIR_ENV: &str = "DISCO_DATA_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendChoice {
    OracleLinear,
    OracleShapes,
    ExternalAdapter,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    SgdMomentum,
    AdaptiveMoment,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AblationMode {
    ContrastVariation,
    ContrastConcat,
    ClassifyVariation,
    ClassifyConcat,
}

impl AblationMode {
    pub fn uses_classifier(self) -> bool {
        matches!(self, AblationMode::ClassifyVariation | AblationMode::ClassifyConcat)
    }

    pub fn uses_concat(self) -> bool {
        matches!(self, AblationMode::ContrastConcat | AblationMode::ClassifyConcat)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendSection {
    pub kind: BackendChoice,
    /// External checkpoint directory; relative paths resolve against
    /// `DISCO_DATA_DIR`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<PathBuf>,
    /// Ground-truth factor count for oracle backends.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub factors: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mixing_seed: Option<u64>,
    /// Mix factors into latents through a seeded rotation?
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entangle: Option<bool>,
    /// Expected latent space of an external checkpoint (validated on load).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub latent_space_tag: Option<SpaceTag>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NavigatorSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<NavigatorKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub directions: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncoderSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<EncoderPreset>,
    /// Representation width n.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps_max: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variant: Option<LossVariant>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    /// Flip threshold in post-temperature logit units; defaults to 0.9/tau
    /// (cosine 0.9).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flip_threshold: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flipping_enabled: Option<bool>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainerSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub learning_rate: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub optimizer: Option<OptimizerKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ablation_mode: Option<AblationMode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoint_every: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSection {
    /// Metric names; any of "mig", "dci".
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metrics: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bins: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub forest_trees: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub forest_depth: Option<usize>,
    /// Ground-truth factor CSV for external backends.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub factor_csv: Option<PathBuf>,
    /// Image list aligned with the factor CSV.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_list: Option<PathBuf>,
}

/// The user-facing configuration document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub backend: BackendSection,
    #[serde(default)]
    pub navigator: NavigatorSection,
    #[serde(default)]
    pub encoder: EncoderSection,
    #[serde(default)]
    pub sampler: SamplerSection,
    #[serde(default)]
    pub loss: LossSection,
    #[serde(default)]
    pub trainer: TrainerSection,
    #[serde(default)]
    pub eval: EvalSection,
}

/// Fully materialized configuration: every default filled in, embedded
/// verbatim in checkpoint manifests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResolvedConfig {
    pub backend: BackendSection,
    pub navigator: ResolvedNavigator,
    pub encoder: ResolvedEncoder,
    pub sampler: ResolvedSampler,
    pub loss: LossConfig,
    pub trainer: ResolvedTrainer,
    pub eval: ResolvedEval,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResolvedNavigator {
    pub kind: NavigatorKind,
    pub directions: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResolvedEncoder {
    pub preset: EncoderPreset,
    pub n: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResolvedSampler {
    pub b: usize,
    pub n: usize,
    pub m: usize,
    pub eps_max: f64,
}

impl ResolvedSampler {
    pub fn as_sampler_config(&self) -> SamplerConfig {
        SamplerConfig { b: self.b, n: self.n, m: self.m, eps_max: self.eps_max }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResolvedTrainer {
    pub steps: usize,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    pub seed: u64,
    pub ablation_mode: AblationMode,
    pub checkpoint_every: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResolvedEval {
    pub metrics: Vec<String>,
    pub bins: usize,
    pub samples: usize,
    pub forest_trees: usize,
    pub forest_depth: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub factor_csv: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_list: Option<PathBuf>,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| DiscoError::Config(format!("config: {e}")))
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| DiscoError::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Construct the generator described by the backend section.
    /// `data_dir` anchors relative external checkpoint paths.
    pub fn build_generator(&self, data_dir: Option<&Path>) -> Result<GeneratorHandle> {
        build_generator(&self.backend, data_dir)
    }
}

/// Construct a generator from a backend section (shared between fresh runs
/// and checkpoint-embedded config snapshots).
pub fn build_generator(b: &BackendSection, data_dir: Option<&Path>) -> Result<GeneratorHandle> {
    match b.kind {
        BackendChoice::OracleLinear | BackendChoice::OracleShapes => {
            if b.checkpoint.is_some() {
                return Err(DiscoError::Config("oracle backends take no checkpoint path".into()));
            }
            let k = b.factors.unwrap_or(4);
            let kind = match b.kind {
                BackendChoice::OracleLinear => OracleKind::Linear,
                _ => OracleKind::Shapes,
            };
            make_oracle_generator(k, kind, b.mixing_seed.unwrap_or(0), b.entangle.unwrap_or(true))
        }
        BackendChoice::ExternalAdapter => {
            if b.factors.is_some() || b.entangle.is_some() || b.mixing_seed.is_some() {
                return Err(DiscoError::Config(
                    "external backends take no oracle fields (factors/entangle/mixing_seed)".into(),
                ));
            }
            let rel = b.checkpoint.as_ref().ok_or_else(|| {
                DiscoError::Config("external backend requires a checkpoint path".into())
            })?;
            let path = if rel.is_absolute() {
                rel.clone()
            } else {
                match data_dir {
                    Some(base) => base.join(rel),
                    None => rel.clone(),
                }
            };
            let gen = load_external_generator(&path)?;
            if let Some(tag) = b.latent_space_tag {
                if tag != gen.space_tag() {
                    return Err(DiscoError::Config(format!(
                        "config expects latent space {:?} but checkpoint declares {:?}",
                        tag,
                        gen.space_tag()
                    )));
                }
            }
            Ok(gen)
        }
    }
}

impl RunConfig {
    /// Fill every default. Contextual defaults depend on the generator:
    /// D = 2K for oracles (64 external), eps_max = 3 for oracles (6 for
    /// Z-space external), encoder preset = conv4 when the image fits it,
    /// otherwise mlp.
    pub fn resolve(&self, gen: &GeneratorHandle) -> Result<ResolvedConfig> {
        let is_oracle = gen.factor_count().is_ok();
        let directions = self.navigator.directions.unwrap_or(if is_oracle {
            2 * gen.factor_count().unwrap_or(gen.latent_dim())
        } else {
            64
        });
        let nav_kind = self.navigator.kind.unwrap_or(NavigatorKind::UnitColumns);
        let (h, w, _) = gen.image_shape();
        let preset = self.encoder.preset.unwrap_or(if h == w && h % 16 == 0 {
            EncoderPreset::Conv4
        } else {
            EncoderPreset::Mlp
        });
        let n = self.encoder.n.unwrap_or(directions);
        let tau = self.loss.tau.unwrap_or(0.1);
        let resolved = ResolvedConfig {
            backend: self.backend.clone(),
            navigator: ResolvedNavigator { kind: nav_kind, directions },
            encoder: ResolvedEncoder { preset, n },
            sampler: ResolvedSampler {
                b: self.sampler.b.unwrap_or(32),
                n: self.sampler.n.unwrap_or(32),
                m: self.sampler.m.unwrap_or(64),
                eps_max: self.sampler.eps_max.unwrap_or(if is_oracle { 3.0 } else { 6.0 }),
            },
            loss: LossConfig {
                variant: self.loss.variant.unwrap_or(LossVariant::BceLogits),
                tau,
                lambda: self.loss.lambda.unwrap_or(1.0),
                flip_threshold: self.loss.flip_threshold.unwrap_or(0.9 / tau),
                flipping_enabled: self.loss.flipping_enabled.unwrap_or(true),
            },
            trainer: ResolvedTrainer {
                steps: self.trainer.steps.unwrap_or(3000),
                learning_rate: self.trainer.learning_rate.unwrap_or(1e-4),
                optimizer: self.trainer.optimizer.unwrap_or(OptimizerKind::AdaptiveMoment),
                seed: self.trainer.seed.unwrap_or(0),
                ablation_mode: self.trainer.ablation_mode.unwrap_or(AblationMode::ContrastVariation),
                checkpoint_every: self.trainer.checkpoint_every.unwrap_or(1000),
            },
            eval: ResolvedEval {
                metrics: self
                    .eval
                    .metrics
                    .clone()
                    .unwrap_or_else(|| vec!["mig".into(), "dci".into()]),
                bins: self.eval.bins.unwrap_or(20),
                samples: self.eval.samples.unwrap_or(10_000),
                forest_trees: self.eval.forest_trees.unwrap_or(10),
                forest_depth: self.eval.forest_depth.unwrap_or(8),
                factor_csv: self.eval.factor_csv.clone(),
                image_list: self.eval.image_list.clone(),
            },
        };
        resolved.validate(gen)?;
        Ok(resolved)
    }
}

impl ResolvedConfig {
    pub fn validate(&self, gen: &GeneratorHandle) -> Result<()> {
        if self.navigator.directions < 2 {
            return Err(DiscoError::Config("need at least 2 directions".into()));
        }
        if self.navigator.kind == NavigatorKind::Orthonormal
            && self.navigator.directions > gen.latent_dim()
        {
            return Err(DiscoError::Config(format!(
                "orthonormal navigator requires D <= latent_dim ({} > {})",
                self.navigator.directions,
                gen.latent_dim()
            )));
        }
        if self.encoder.n < 2 {
            return Err(DiscoError::Config("encoder output width n must be >= 2".into()));
        }
        self.sampler.as_sampler_config().validate(self.navigator.directions)?;
        self.loss.validate()?;
        if self.trainer.steps == 0 {
            return Err(DiscoError::Config("trainer.steps must be >= 1".into()));
        }
        if !(self.trainer.learning_rate >= 0.0) || !self.trainer.learning_rate.is_finite() {
            return Err(DiscoError::Config(format!(
                "learning rate must be finite and >= 0, got {}",
                self.trainer.learning_rate
            )));
        }
        if self.trainer.checkpoint_every == 0 {
            return Err(DiscoError::Config("trainer.checkpoint_every must be >= 1".into()));
        }
        if self.eval.bins < 2 {
            return Err(DiscoError::Config("eval.bins must be >= 2".into()));
        }
        if self.eval.samples < 2 {
            return Err(DiscoError::Config("eval.samples must be >= 2".into()));
        }
        if self.eval.forest_trees == 0 || self.eval.forest_depth == 0 {
            return Err(DiscoError::Config("eval forest needs trees >= 1 and depth >= 1".into()));
        }
        for m in &self.eval.metrics {
            if m != "mig" && m != "dci" {
                return Err(DiscoError::Config(format!(
                    "unknown metric `{m}` (expected mig or dci)"
                )));
            }
        }
        Ok(())
    }

    /// Rebuild the generator from the embedded backend section (used when
    /// resuming or evaluating from a checkpoint).
    pub fn build_generator(&self, data_dir: Option<&Path>) -> Result<GeneratorHandle> {
        build_generator(&self.backend, data_dir)
    }

    pub fn metric_selection(&self) -> crate::metrics::MetricSelection {
        crate::metrics::MetricSelection {
            mig: self.eval.metrics.iter().any(|m| m == "mig"),
            dci: self.eval.metrics.iter().any(|m| m == "dci"),
        }
    }
}
