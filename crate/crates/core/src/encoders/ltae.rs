//! Lightweight temporal attention encoder.
//!
//! The `E` input channels are split into `H` contiguous groups of `E/H`, one
//! per head. Every head adds the day encoding to its group, projects the
//! result to keys, scores the keys against its own learned master query and
//! returns the attention-weighted temporal sum of its (encoded) group. Head
//! outputs are concatenated back to size `E` and passed through an MLP.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::positional::{elapsed_days, positional_table, DEFAULT_TAU};
use super::{check_days, AttentionRecord, EncoderTrace};
use crate::error::{config_err, ConfigError, Error, Result};
use crate::nn::{
    mlp_param_count, standard_normal, validate_widths, Bound, Linear, Mlp, ParamId, ParamStore,
};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// How each head obtains its master query.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryScheme {
    /// One learned `K`-vector per head.
    #[default]
    Learned,
    /// Per-step queries from a linear layer on the head's group, averaged
    /// over time (ablation of the learned query).
    TemporalMean,
}

fn default_tau() -> f64 {
    DEFAULT_TAU
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LtaeConfig {
    /// Input channels `E`.
    pub embed_dim: usize,
    /// Sequence length `T`.
    pub seq_len: usize,
    /// Heads `H`; must divide `embed_dim`.
    pub n_head: usize,
    /// Key and query size `K`.
    pub d_k: usize,
    #[serde(default = "default_tau")]
    pub tau: f64,
    /// MLP widths, starting with `embed_dim`.
    pub mlp_widths: Vec<usize>,
    #[serde(default)]
    pub query: QueryScheme,
}

impl Default for LtaeConfig {
    fn default() -> Self {
        Self {
            embed_dim: 256,
            seq_len: 24,
            n_head: 16,
            d_k: 8,
            tau: DEFAULT_TAU,
            mlp_widths: vec![256, 128],
            query: QueryScheme::Learned,
        }
    }
}

impl LtaeConfig {
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
        if self.mlp_widths[0] != self.embed_dim {
            return Err(ConfigError::MlpInputMismatch {
                expected: self.embed_dim,
                found: self.mlp_widths[0],
            }
            .into());
        }
        Ok(())
    }

    /// Channels per head, `E' = E / H`.
    pub fn group_size(&self) -> usize {
        self.embed_dim / self.n_head
    }

    pub fn output_dim(&self) -> usize {
        *self.mlp_widths.last().expect("validated widths")
    }

    /// Closed-form parameter count.
    pub fn param_count(&self) -> usize {
        let (g, k, h) = (self.group_size(), self.d_k, self.n_head);
        let keys = h * (g * k + k);
        let queries = match self.query {
            QueryScheme::Learned => h * k,
            QueryScheme::TemporalMean => h * (g * k + k),
        };
        keys + queries + mlp_param_count(&self.mlp_widths)
    }
}

#[derive(Clone, Debug)]
enum HeadQuery {
    Master(ParamId),
    Projected(Linear),
}

#[derive(Clone, Debug)]
struct LtaeHead {
    key: Linear,
    query: HeadQuery,
}

#[derive(Clone, Debug)]
pub struct Ltae {
    config: LtaeConfig,
    heads: Vec<LtaeHead>,
    mlp: Mlp,
}

impl Ltae {
    /// Registers the encoder's parameters under `prefix` in `store`.
    pub fn new(
        config: LtaeConfig,
        store: &mut ParamStore,
        prefix: &str,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        config.validate()?;
        let (g, k) = (config.group_size(), config.d_k);
        let heads = (0..config.n_head)
            .map(|h| {
                let key = Linear::new(store, &format!("{prefix}.head{h}.key"), g, k, rng);
                let query = match config.query {
                    QueryScheme::Learned => HeadQuery::Master(store.add(
                        format!("{prefix}.head{h}.query"),
                        standard_normal(rng, k, 1.0 / (k as f64).sqrt()),
                    )),
                    QueryScheme::TemporalMean => HeadQuery::Projected(Linear::new(
                        store,
                        &format!("{prefix}.head{h}.query"),
                        g,
                        k,
                        rng,
                    )),
                };
                LtaeHead { key, query }
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

    pub fn config(&self) -> &LtaeConfig {
        &self.config
    }

    /// Differentiable forward pass on an `[E × T]` input.
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
                op: "ltae input",
                lhs: shape,
                rhs: vec![cfg.embed_dim, cfg.seq_len],
            });
        }
        check_days(days, cfg.seq_len)?;
        let g = cfg.group_size();
        let pos = tape.constant(positional_table(&elapsed_days(days), g, cfg.tau));
        let scale = 1.0 / (cfg.d_k as f64).sqrt();

        let mut masks = Vec::with_capacity(cfg.n_head);
        let mut head_outputs = Vec::with_capacity(cfg.n_head);
        for (h, head) in self.heads.iter().enumerate() {
            let group = tape.slice(e, 0, h * g, g)?;
            let encoded = tape.add(group, pos)?;
            let steps = tape.transpose(encoded)?;
            let keys = head.key.forward(tape, bound, steps)?;
            let query = match &head.query {
                HeadQuery::Master(id) => bound.var(*id),
                HeadQuery::Projected(lin) => {
                    let per_step = lin.forward(tape, bound, steps)?;
                    tape.mean_axis(per_step, 0)?
                }
            };
            let mask = scaled_attention(tape, keys, query, scale)?;
            let weights = tape.reshape(mask, &[cfg.seq_len, 1])?;
            let out = tape.matmul(encoded, weights)?;
            masks.push(mask);
            head_outputs.push(tape.reshape(out, &[g])?);
        }
        let masks = tape.concat(&masks, 0)?;
        let joined = tape.concat(&head_outputs, 0)?;
        let row = tape.reshape(joined, &[1, cfg.embed_dim])?;
        let mlp_out = self.mlp.forward(tape, bound, row)?;
        let output = tape.reshape(mlp_out, &[cfg.output_dim()])?;
        Ok(EncoderTrace {
            output,
            masks,
            head_outputs,
        })
    }

    /// Inference-only forward returning plain values.
    pub fn attend(&self, store: &ParamStore, e: &Tensor, days: &[f64]) -> Result<AttentionRecord> {
        let mut tape = Tape::new();
        let bound = store.bind(&mut tape, false);
        let input = tape.constant(e.clone());
        let trace = self.forward(&mut tape, &bound, input, days)?;
        Ok(trace.record(&tape))
    }
}

/// `softmax(scale · keys · query)` as a `[1 × T]` row, for `[T × K]` keys and
/// a `K`-vector query.
pub(crate) fn scaled_attention(tape: &mut Tape, keys: Var, query: Var, scale: f64) -> Result<Var> {
    let k = tape.value(query).len();
    let column = tape.reshape(query, &[k, 1])?;
    let logits = tape.matmul(keys, column)?;
    let t = tape.value(logits).len();
    let row = tape.reshape(logits, &[1, t])?;
    tape.softmax(row, scale)
}

/// Splits the rows of an `[E × T]` input into `n_head` contiguous groups.
pub fn group_channels(e: &Tensor, n_head: usize) -> Result<Vec<Tensor>> {
    if e.rank() != 2 {
        return Err(Error::Dimension {
            op: "group_channels",
            lhs: e.shape().to_vec(),
            rhs: vec![],
        });
    }
    let embed = e.shape()[0];
    if n_head == 0 || !embed.is_multiple_of(n_head) {
        return Err(ConfigError::HeadsDoNotDivide {
            embed,
            heads: n_head,
        }
        .into());
    }
    let g = embed / n_head;
    let mut tape = Tape::new();
    let input = tape.constant(e.clone());
    (0..n_head)
        .map(|h| {
            let part = tape.slice(input, 0, h * g, g)?;
            Ok(tape.value(part).clone())
        })
        .collect()
}

/// Keys `Wᵀ (e_h + p) + b` for every step, as a `[K × T]` matrix.
///
/// `group` and `pos` are `[E' × T]`, `weight` is `[E' × K]`, `bias` is `[K]`.
pub fn compute_keys(
    group: &Tensor,
    pos: &Tensor,
    weight: &Tensor,
    bias: &Tensor,
) -> Result<Tensor> {
    let mut tape = Tape::new();
    let (gv, pv) = (tape.constant(group.clone()), tape.constant(pos.clone()));
    let (wv, bv) = (tape.constant(weight.clone()), tape.constant(bias.clone()));
    let encoded = tape.add(gv, pv)?;
    let steps = tape.transpose(encoded)?;
    let xw = tape.matmul(steps, wv)?;
    let keys = tape.add_row(xw, bv)?;
    tape.value(keys).transposed()
}

/// Attention mask over `T` steps for `[K × T]` keys and a `K`-vector query.
pub fn attention_mask(keys: &Tensor, query: &Tensor) -> Result<Tensor> {
    if keys.rank() != 2 || keys.shape()[0] != query.len() {
        return Err(Error::Dimension {
            op: "attention_mask",
            lhs: keys.shape().to_vec(),
            rhs: query.shape().to_vec(),
        });
    }
    let mut tape = Tape::new();
    let kt = tape.constant(keys.transposed()?);
    let q = tape.constant(query.clone());
    let mask = scaled_attention(&mut tape, kt, q, 1.0 / (query.len() as f64).sqrt())?;
    tape.value(mask).reshaped(&[keys.shape()[1]])
}

/// `Σ_t mask[t] · (group[:, t] + pos[:, t])`.
pub fn head_output(mask: &Tensor, group: &Tensor, pos: &Tensor) -> Result<Tensor> {
    let mut tape = Tape::new();
    let (gv, pv) = (tape.constant(group.clone()), tape.constant(pos.clone()));
    let encoded = tape.add(gv, pv)?;
    let weights = tape.constant(mask.reshaped(&[mask.len(), 1])?);
    let out = tape.matmul(encoded, weights)?;
    tape.value(out).reshaped(&[group.rows()])
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn group_channels_slices_per_head() {
        let e = Tensor::matrix(4, 1, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let groups = group_channels(&e, 2).unwrap();
        assert_eq!(groups[0].data(), &[1.0, 2.0]);
        assert_eq!(groups[1].data(), &[3.0, 4.0]);
        assert_eq!(group_channels(&e, 1).unwrap()[0], e);
        assert!(matches!(
            group_channels(&e, 3),
            Err(Error::Config(ConfigError::HeadsDoNotDivide {
                embed: 4,
                heads: 3
            }))
        ));
    }

    #[test]
    fn keys_degenerate_cases() {
        let group = Tensor::matrix(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let zeros = Tensor::zeros(&[2, 3]);
        let bias = Tensor::vector(vec![0.5, -1.0]);
        let keys = compute_keys(&group, &zeros, &Tensor::zeros(&[2, 2]), &bias).unwrap();
        assert_eq!(keys.data(), &[0.5, 0.5, 0.5, -1.0, -1.0, -1.0]);

        let eye = Tensor::matrix(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let keys = compute_keys(&group, &zeros, &eye, &Tensor::zeros(&[2])).unwrap();
        assert_eq!(keys, group);
    }

    #[test]
    fn mask_examples() {
        let single = attention_mask(
            &Tensor::matrix(3, 1, vec![1.0, 2.0, 3.0]).unwrap(),
            &Tensor::vector(vec![1.0, 1.0, 1.0]),
        )
        .unwrap();
        assert_eq!(single.data(), &[1.0]);

        let same = Tensor::matrix(2, 4, vec![0.3, 0.3, 0.3, 0.3, -2.0, -2.0, -2.0, -2.0]).unwrap();
        let m = attention_mask(&same, &Tensor::vector(vec![0.7, 1.1])).unwrap();
        assert!(close(m.data(), &[0.25; 4], 1e-15));

        let keys = Tensor::matrix(1, 2, vec![0.0, 4f64.ln()]).unwrap();
        let m = attention_mask(&keys, &Tensor::vector(vec![1.0])).unwrap();
        assert!(close(m.data(), &[0.2, 0.8], 1e-15));
    }

    #[test]
    fn head_output_selection_and_mean() {
        let group = Tensor::matrix(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let pos = Tensor::matrix(2, 3, vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6]).unwrap();
        let onehot = Tensor::vector(vec![0.0, 1.0, 0.0]);
        let o = head_output(&onehot, &group, &pos).unwrap();
        assert_eq!(o.data(), &[2.2, 5.5]);
        let uniform = Tensor::vector(vec![1.0 / 3.0; 3]);
        let o = head_output(&uniform, &group, &pos).unwrap();
        assert!(close(o.data(), &[2.2, 5.5], 1e-12));
    }

    #[test]
    fn config_validation() {
        let mut cfg = LtaeConfig::default();
        cfg.validate().unwrap();
        cfg.n_head = 5;
        assert!(matches!(
            cfg.validate(),
            Err(Error::Config(ConfigError::HeadsDoNotDivide { .. }))
        ));
        let cfg = LtaeConfig {
            mlp_widths: vec![128, 64],
            ..Default::default()
        };
        assert!(matches!(
            cfg.validate(),
            Err(Error::Config(ConfigError::MlpInputMismatch { .. }))
        ));
        let cfg = LtaeConfig {
            d_k: 0,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn default_output_length() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut store = ParamStore::new();
        let cfg = LtaeConfig::default();
        let model = Ltae::new(cfg.clone(), &mut store, "ltae", &mut rng).unwrap();
        assert_eq!(store.scalar_count(), 35_200);
        let e = Tensor::full(&[256, 24], 0.1);
        let days: Vec<f64> = (0..24).map(|t| t as f64 * 13.0).collect();
        let rec = model.attend(&store, &e, &days).unwrap();
        assert_eq!(rec.output.len(), 128);
        assert_eq!(rec.masks.shape(), &[16, 24]);
        assert_eq!(rec.head_outputs.len(), 16);
    }

    #[test]
    fn rejects_decreasing_days() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut store = ParamStore::new();
        let cfg = LtaeConfig {
            embed_dim: 4,
            seq_len: 3,
            n_head: 2,
            d_k: 2,
            mlp_widths: vec![4],
            ..LtaeConfig::default()
        };
        let model = Ltae::new(cfg, &mut store, "l", &mut rng).unwrap();
        let e = Tensor::zeros(&[4, 3]);
        assert!(model.attend(&store, &e, &[0.0, 5.0, 2.0]).is_err());
        assert!(model.attend(&store, &e, &[0.0, 5.0]).is_err());
    }
}
