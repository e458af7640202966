//! Temporal encoders mapping an `[E × T]` sequence to a single vector.

pub mod ltae;
pub mod positional;
pub mod tae;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Bound, ParamStore};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

pub use ltae::{
    attention_mask, compute_keys, group_channels, head_output, Ltae, LtaeConfig, QueryScheme,
};
pub use positional::{positional_encoding, positional_table, DEFAULT_TAU};
pub use tae::{Tae, TaeConfig};

/// Tape handles produced by an encoder forward pass.
#[derive(Clone, Debug)]
pub struct EncoderTrace {
    pub output: Var,
    /// `[H × T]` attention weights.
    pub masks: Var,
    pub head_outputs: Vec<Var>,
}

impl EncoderTrace {
    pub fn record(&self, tape: &Tape) -> AttentionRecord {
        AttentionRecord {
            masks: tape.value(self.masks).clone(),
            head_outputs: self
                .head_outputs
                .iter()
                .map(|&v| tape.value(v).clone())
                .collect(),
            output: tape.value(self.output).clone(),
        }
    }
}

/// Attention masks, per-head outputs and final output of one sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionRecord {
    pub masks: Tensor,
    pub head_outputs: Vec<Tensor>,
    pub output: Tensor,
}

pub(crate) fn check_days(days: &[f64], seq_len: usize) -> Result<()> {
    if days.len() != seq_len {
        return Err(Error::Dimension {
            op: "days",
            lhs: vec![days.len()],
            rhs: vec![seq_len],
        });
    }
    if days.iter().any(|d| !d.is_finite()) || days.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Contract(
            "days must be finite and non-decreasing".into(),
        ));
    }
    Ok(())
}

/// Serializable choice of temporal encoder.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TemporalConfig {
    Ltae(LtaeConfig),
    Tae(TaeConfig),
}

impl TemporalConfig {
    pub fn validate(&self) -> Result<()> {
        match self {
            TemporalConfig::Ltae(c) => c.validate(),
            TemporalConfig::Tae(c) => c.validate(),
        }
    }

    pub fn embed_dim(&self) -> usize {
        match self {
            TemporalConfig::Ltae(c) => c.embed_dim,
            TemporalConfig::Tae(c) => c.embed_dim,
        }
    }

    pub fn seq_len(&self) -> usize {
        match self {
            TemporalConfig::Ltae(c) => c.seq_len,
            TemporalConfig::Tae(c) => c.seq_len,
        }
    }

    pub fn n_head(&self) -> usize {
        match self {
            TemporalConfig::Ltae(c) => c.n_head,
            TemporalConfig::Tae(c) => c.n_head,
        }
    }

    pub fn output_dim(&self) -> usize {
        match self {
            TemporalConfig::Ltae(c) => c.output_dim(),
            TemporalConfig::Tae(c) => c.output_dim(),
        }
    }

    pub fn param_count(&self) -> usize {
        match self {
            TemporalConfig::Ltae(c) => c.param_count(),
            TemporalConfig::Tae(c) => c.param_count(),
        }
    }
}

#[derive(Clone, Debug)]
pub enum TemporalEncoder {
    Ltae(Ltae),
    Tae(Tae),
}

impl TemporalEncoder {
    pub fn new(
        config: &TemporalConfig,
        store: &mut ParamStore,
        prefix: &str,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        Ok(match config {
            TemporalConfig::Ltae(c) => {
                TemporalEncoder::Ltae(Ltae::new(c.clone(), store, prefix, rng)?)
            }
            TemporalConfig::Tae(c) => {
                TemporalEncoder::Tae(Tae::new(c.clone(), store, prefix, rng)?)
            }
        })
    }

    pub fn forward(
        &self,
        tape: &mut Tape,
        bound: &Bound,
        e: Var,
        days: &[f64],
    ) -> Result<EncoderTrace> {
        match self {
            TemporalEncoder::Ltae(m) => m.forward(tape, bound, e, days),
            TemporalEncoder::Tae(m) => m.forward(tape, bound, e, days),
        }
    }

    pub fn attend(&self, store: &ParamStore, e: &Tensor, days: &[f64]) -> Result<AttentionRecord> {
        match self {
            TemporalEncoder::Ltae(m) => m.attend(store, e, days),
            TemporalEncoder::Tae(m) => m.attend(store, e, days),
        }
    }
}
