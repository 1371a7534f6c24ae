//! Error type shared across the toolkit.

use thiserror::Error;

/// All failure modes surfaced by the library.
#[derive(Debug, Error)]
pub enum DiscoError {
    /// Invalid configuration: bad dimensions, unsupported combinations,
    /// schema violations. Maps to CLI exit code 2.
    #[error("configuration error: {0}")]
    Config(String),

    /// Invalid runtime input (shape mismatch, non-finite values, out-of-range
    /// index).
    #[error("input error: {0}")]
    Input(String),

    /// Operation not supported by this backend kind.
    #[error("unsupported: {0}")]
    Unsupported(String),

    /// The two encodings of a traversal pair coincide, so the variation
    /// vector cannot be normalized. The sampler resamples on this.
    #[error("degenerate variation: {0}")]
    DegenerateVariation(String),

    /// A parameter left the feasible region (e.g. a zero navigator column
    /// under the unit-column constraint).
    #[error("degenerate parameter: {0}")]
    DegenerateParameter(String),

    /// Batch realization exhausted its resample budget.
    #[error("batch error: {0}")]
    Batch(String),

    /// Metric evaluation failed (zero-entropy factors, regressor failure).
    #[error("metric error: {0}")]
    Metric(String),

    /// Malformed checkpoint or manifest on disk.
    #[error("format error: {0}")]
    Format(String),

    /// The training loss became non-finite; carries a dump of the offending
    /// batch specification.
    #[error("non-finite loss at step {step}; batch spec: {spec_dump}")]
    NonFiniteLoss { step: usize, spec_dump: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl DiscoError {
    /// Process exit code for the CLI: 2 for configuration problems,
    /// 3 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            DiscoError::Config(_) | DiscoError::Unsupported(_) => 2,
            _ => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, DiscoError>;
