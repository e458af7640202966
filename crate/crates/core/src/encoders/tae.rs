//! Temporal attention encoder baseline.
//!
//! Each head projects the full day-encoded input to per-step queries and
//! keys, averages the queries over time into one master query, and uses the
//! resulting mask to weight the raw input vectors. The `H` head outputs of
//! size `E` are concatenated (width `H·E`) before the MLP.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::ltae::scaled_attention;
use super::positional::{elapsed_days, positional_table, DEFAULT_TAU};
use super::{check_days, AttentionRecord, EncoderTrace};
use crate::error::{config_err, ConfigError, Error, Result};
use crate::nn::{mlp_param_count, validate_widths, Bound, Linear, Mlp, ParamStore};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

fn default_tau() -> f64 {
    DEFAULT_TAU
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaeConfig {
    pub embed_dim: usize,
    pub seq_len: usize,
    pub n_head: usize,
    /// Width of the per-head query and key projections.
    pub d_k: usize,
    #[serde(default = "default_tau")]
    pub tau: f64,
    /// MLP widths, starting with `n_head * embed_dim`.
    pub mlp_widths: Vec<usize>,
}

impl TaeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_head == 0 || self.embed_dim == 0 || !self.embed_dim.is_multiple_of(self.n_head) {
            return Err(ConfigError::HeadsDoNotDivide {
                embed: self.embed_dim,
                heads: self.n_head,
            }
            .into());
        }
        if self.d_k == 0 {
            return Err(config_err("key dimension must be at least 1"));
        }
        if self.seq_len == 0 {
            return Err(config_err("sequence length must be at least 1"));
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(config_err(format!(
                "tau must be positive, got {}",
                self.tau
            )));
        }
        validate_widths(&self.mlp_widths, "mlp_widths")?;
        if self.mlp_widths[0] != self.concat_dim() {
            return Err(ConfigError::MlpInputMismatch {
                expected: self.concat_dim(),
                found: self.mlp_widths[0],
            }
            .into());
        }
        Ok(())
    }

    /// Width of the concatenated head outputs.
    pub fn concat_dim(&self) -> usize {
        self.n_head * self.embed_dim
    }

    pub fn output_dim(&self) -> usize {
        *self.mlp_widths.last().expect("validated widths")
    }

    pub fn param_count(&self) -> usize {
        let (e, k, h) = (self.embed_dim, self.d_k, self.n_head);
        2 * h * (e * k + k) + mlp_param_count(&self.mlp_widths)
    }
}

#[derive(Clone, Debug)]
struct TaeHead {
    query: Linear,
    key: Linear,
}

#[derive(Clone, Debug)]
pub struct Tae {
    config: TaeConfig,
    heads: Vec<TaeHead>,
    mlp: Mlp,
}

impl Tae {
    pub fn new(
        config: TaeConfig,
        store: &mut ParamStore,
        prefix: &str,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        config.validate()?;
        let (e, k) = (config.embed_dim, config.d_k);
        let heads = (0..config.n_head)
            .map(|h| TaeHead {
                query: Linear::new(store, &format!("{prefix}.head{h}.query"), e, k, rng),
                key: Linear::new(store, &format!("{prefix}.head{h}.key"), e, k, rng),
            })
            .collect();
        let mlp = Mlp::new(
            store,
            &format!("{prefix}.mlp"),
            &config.mlp_widths,
            false,
            rng,
        )?;
        Ok(Self { config, heads, mlp })
    }

    pub fn config(&self) -> &TaeConfig {
        &self.config
    }

    pub fn forward(
        &self,
        tape: &mut Tape,
        bound: &Bound,
        e: Var,
        days: &[f64],
    ) -> Result<EncoderTrace> {
        let cfg = &self.config;
        let shape = tape.value(e).shape().to_vec();
        if shape != [cfg.embed_dim, cfg.seq_len] {
            return Err(Error::Dimension {
                op: "tae input",
                lhs: shape,
                rhs: vec![cfg.embed_dim, cfg.seq_len],
            });
        }
        check_days(days, cfg.seq_len)?;
        let pos = tape.constant(positional_table(
            &elapsed_days(days),
            cfg.embed_dim,
            cfg.tau,
        ));
        let encoded = tape.add(e, pos)?;
        let steps = tape.transpose(encoded)?;
        let scale = 1.0 / (cfg.d_k as f64).sqrt();

        let mut masks = Vec::with_capacity(cfg.n_head);
        let mut head_outputs = Vec::with_capacity(cfg.n_head);
        for head in &self.heads {
            let queries = head.query.forward(tape, bound, steps)?;
            let master = tape.mean_axis(queries, 0)?;
            let keys = head.key.forward(tape, bound, steps)?;
            let mask = scaled_attention(tape, keys, master, scale)?;
            let weights = tape.reshape(mask, &[cfg.seq_len, 1])?;
            // values bypass the encoding: v_t = e_t
            let out = tape.matmul(e, weights)?;
            masks.push(mask);
            head_outputs.push(tape.reshape(out, &[cfg.embed_dim])?);
        }
        let masks = tape.concat(&masks, 0)?;
        let joined = tape.concat(&head_outputs, 0)?;
        let row = tape.reshape(joined, &[1, cfg.concat_dim()])?;
        let mlp_out = self.mlp.forward(tape, bound, row)?;
        let output = tape.reshape(mlp_out, &[cfg.output_dim()])?;
        Ok(EncoderTrace {
            output,
            masks,
            head_outputs,
        })
    }

    pub fn attend(&self, store: &ParamStore, e: &Tensor, days: &[f64]) -> Result<AttentionRecord> {
        let mut tape = Tape::new();
        let bound = store.bind(&mut tape, false);
        let input = tape.constant(e.clone());
        let trace = self.forward(&mut tape, &bound, input, days)?;
        Ok(trace.record(&tape))
    }
}
