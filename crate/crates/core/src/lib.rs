//! Direction discovery on frozen generative models via contrastive learning.
//!
//! The pieces, in data-flow order:
//!
//! * [`gen_backend`] — frozen generators `G` (synthetic oracles with known
//!   factors, plus an external checkpoint adapter).
//! * [`navigator`] — the trainable direction model `A(d, eps)`.
//! * [`contrastor`] — shared-weight encoder `E` and the variation-space map
//!   `v = normalize(|E(G(z + A(d, eps))) - E(G(z))|)`.
//! * [`sampler`] — query / positive / negative batch construction.
//! * [`losses`] — contrastive objectives and the entropy regularizer, with
//!   analytic gradients.
//! * [`trainer`] — optimization loop, optimizer states, checkpointing.
//! * [`metrics`] — MIG and DCI disentanglement scores.
//! * [`evalviz`] — traversal grids, similarity matrices, CSV exports.

pub mod config;
pub mod contrastor;
pub mod error;
pub mod evalviz;
pub mod gen_backend;
pub mod losses;
pub mod metrics;
pub mod navigator;
pub mod nn;
pub mod rng;
pub mod sampler;
pub mod trainer;

pub use config::{AblationMode, BackendChoice, OptimizerKind, ResolvedConfig, RunConfig};
pub use contrastor::{EncoderParams, EncoderPreset, VariationVector};
pub use error::{DiscoError, Result};
pub use gen_backend::{
    load_external_generator, make_oracle_generator, BackendKind, FactorVector, GeneratorHandle,
    Image, LatentCode, LatentPrior, OracleKind, SpaceTag,
};
pub use losses::{LossConfig, LossReport, LossVariant};
pub use navigator::{init_navigator, NavigatorKind, NavigatorParams};
pub use trainer::{fit, TrainState};
