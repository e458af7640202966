//! Exact parameter and FLOP accounting for temporal encoders, plus the
//! asymptotic cost terms of the encoder families.
//!
//! FLOP convention:
//! - an affine map `in → out` costs `2·in·out` (one multiply-accumulate is 2
//!   FLOPs; the bias add is absorbed in the accumulation count);
//! - every elementwise add (day encoding, averaging) is 1 FLOP;
//! - each softmax entry costs one `exp` and one division, 2 FLOPs each;
//! - hidden-layer activations cost 1 FLOP per element.

use std::fmt::{self, Write as _};

use serde::Serialize;

use crate::encoders::{LtaeConfig, QueryScheme, TaeConfig, TemporalConfig};
use crate::error::Result;
use crate::nn::mlp_param_count;

pub const FLOP_CONVENTION: &str =
    "affine in->out = 2*in*out (MAC = 2 FLOPs, bias included); add = 1; softmax exp = 2, div = 2 per entry; activation = 1 per element";

/// Closed-form parameter count of a temporal encoder.
pub fn count_params(config: &TemporalConfig) -> Result<usize> {
    config.validate()?;
    Ok(config.param_count())
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct CostReport {
    pub method: String,
    pub seq_len: usize,
    pub param_count: usize,
    pub flops_keys: u64,
    pub flops_queries: u64,
    pub flops_mask: u64,
    pub flops_output: u64,
    pub flops_mlp: u64,
    pub flops_total: u64,
    pub asymptotic_keys: String,
    pub asymptotic_mask: String,
    pub asymptotic_output: String,
}

fn mflops(flops: u64) -> f64 {
    flops as f64 / 1e6
}

impl CostReport {
    pub fn total_mflops(&self) -> f64 {
        mflops(self.flops_total)
    }

    /// `key = value` lines with fixed field names, raw FLOPs and MFLOPs.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "method = \"{}\"", self.method);
        let _ = writeln!(out, "convention = \"{FLOP_CONVENTION}\"");
        let _ = writeln!(out, "seq_len = {}", self.seq_len);
        let _ = writeln!(out, "param_count = {}", self.param_count);
        for (name, v) in self.parts() {
            let _ = writeln!(out, "{name} = {v}");
            let _ = writeln!(out, "{name}_mflops = {}", mflops(v));
        }
        let _ = writeln!(out, "asymptotic_keys = \"{}\"", self.asymptotic_keys);
        let _ = writeln!(out, "asymptotic_mask = \"{}\"", self.asymptotic_mask);
        let _ = writeln!(out, "asymptotic_output = \"{}\"", self.asymptotic_output);
        out
    }

    fn parts(&self) -> [(&'static str, u64); 6] {
        [
            ("flops_keys", self.flops_keys),
            ("flops_queries", self.flops_queries),
            ("flops_mask", self.flops_mask),
            ("flops_output", self.flops_output),
            ("flops_mlp", self.flops_mlp),
            ("flops_total", self.flops_total),
        ]
    }
}

fn mlp_flops(widths: &[usize]) -> u64 {
    let layers = widths.len().saturating_sub(1);
    widths
        .windows(2)
        .enumerate()
        .map(|(i, w)| {
            let affine = 2 * w[0] * w[1];
            let activation = if i + 1 < layers { w[1] } else { 0 };
            (affine + activation) as u64
        })
        .sum()
}

struct Parts {
    keys: usize,
    queries: usize,
    mask: usize,
    output: usize,
}

fn ltae_parts(c: &LtaeConfig, t: usize) -> Parts {
    let (h, g, k) = (c.n_head, c.group_size(), c.d_k);
    Parts {
        keys: t * h * (2 * g * k + g),
        queries: match c.query {
            QueryScheme::Learned => 0,
            QueryScheme::TemporalMean => t * h * 2 * g * k + h * k * t,
        },
        mask: h * 2 * t * k + t * h * 4,
        output: h * t * 2 * g,
    }
}

fn tae_parts(c: &TaeConfig, t: usize) -> Parts {
    let (h, e, k) = (c.n_head, c.embed_dim, c.d_k);
    Parts {
        keys: t * h * (2 * e * k + e),
        queries: t * h * 2 * e * k + h * k * t,
        mask: h * 2 * t * k + t * h * 4,
        output: h * t * 2 * e,
    }
}

/// FLOPs of one inference pass over a sequence of `seq_len` steps.
pub fn count_flops(config: &TemporalConfig, seq_len: usize) -> Result<CostReport> {
    config.validate()?;
    let (method, parts, widths) = match config {
        TemporalConfig::Ltae(c) => (Method::Ltae, ltae_parts(c, seq_len), &c.mlp_widths),
        TemporalConfig::Tae(c) => (Method::Tae, tae_parts(c, seq_len), &c.mlp_widths),
    };
    let asym = asymptotic_cost(method);
    let flops_mlp = mlp_flops(widths);
    let (keys, queries, mask, output) = (
        parts.keys as u64,
        parts.queries as u64,
        parts.mask as u64,
        parts.output as u64,
    );
    Ok(CostReport {
        method: method.to_string(),
        seq_len,
        param_count: config.param_count(),
        flops_keys: keys,
        flops_queries: queries,
        flops_mask: mask,
        flops_output: output,
        flops_mlp,
        flops_total: keys + queries + mask + output + flops_mlp,
        asymptotic_keys: asym.keys.to_string(),
        asymptotic_mask: asym.mask.to_string(),
        asymptotic_output: asym.output.to_string(),
    })
}

/// Size symbols of the asymptotic cost terms.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Symbol {
    /// Heads.
    H,
    /// Recurrent hidden-state size.
    M,
    /// Sequence length.
    T,
    /// Input channels.
    E,
    /// Key size.
    K,
    /// Output vector size.
    X,
}

const SYMBOLS: [Symbol; 6] = [
    Symbol::H,
    Symbol::M,
    Symbol::T,
    Symbol::E,
    Symbol::K,
    Symbol::X,
];

impl fmt::Display for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

/// Product of symbol powers.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Monomial {
    powers: [u32; 6],
}

impl Monomial {
    pub fn of(symbols: &[Symbol]) -> Self {
        let mut m = Self::default();
        for s in symbols {
            m.powers[*s as usize] += 1;
        }
        m
    }

    pub fn power(&self, s: Symbol) -> u32 {
        self.powers[s as usize]
    }

    /// Growth factor when `s` is doubled.
    pub fn doubling_factor(&self, s: Symbol) -> u64 {
        1 << self.power(s)
    }

    fn is_one(&self) -> bool {
        self.powers.iter().all(|&p| p == 0)
    }
}

impl fmt::Display for Monomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for s in SYMBOLS {
            match self.power(s) {
                0 => {}
                1 => write!(f, "{s}")?,
                2 => write!(f, "{s}²")?,
                p => write!(f, "{s}^{p}")?,
            }
        }
        Ok(())
    }
}

/// Sum of monomials, displayed as `O(...)` with the common factor pulled out.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Term {
    pub monomials: Vec<Monomial>,
}

impl Term {
    fn single(symbols: &[Symbol]) -> Self {
        Self {
            monomials: vec![Monomial::of(symbols)],
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.monomials.len() == 1 {
            return write!(f, "O({})", self.monomials[0]);
        }
        let mut common = Monomial::default();
        for s in SYMBOLS {
            common.powers[s as usize] =
                self.monomials.iter().map(|m| m.power(s)).min().unwrap_or(0);
        }
        let rest: Vec<String> = self
            .monomials
            .iter()
            .map(|m| {
                let mut r = m.clone();
                for i in 0..6 {
                    r.powers[i] -= common.powers[i];
                }
                if r.is_one() {
                    "1".to_string()
                } else {
                    r.to_string()
                }
            })
            .collect();
        write!(f, "O({common}({}))", rest.join("+"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    Ltae,
    Tae,
    Transformer,
    Gru,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Ltae => "L-TAE",
            Method::Tae => "TAE",
            Method::Transformer => "Transformer",
            Method::Gru => "GRU",
        })
    }
}

/// Asymptotic cost of keys, attention mask and output computation. For the
/// GRU the memory update covers both `keys` and `mask`, which then hold the
/// same combined term.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AsymptoticCost {
    pub method: Method,
    pub keys: Term,
    pub mask: Term,
    pub output: Term,
    pub keys_and_mask_combined: bool,
}

pub fn asymptotic_cost(method: Method) -> AsymptoticCost {
    use Symbol::*;
    let (keys, mask, output, combined) = match method {
        Method::Ltae => (
            Term::single(&[T, E, K]),
            Term::single(&[H, T, K]),
            Term::single(&[E, X]),
            false,
        ),
        Method::Tae => (
            Term::single(&[H, T, E, K]),
            Term::single(&[H, T, K]),
            Term::single(&[H, E, X]),
            false,
        ),
        Method::Transformer => (
            Term::single(&[H, T, E, K]),
            Term::single(&[H, T, T, K]),
            Term::single(&[H, E, X]),
            false,
        ),
        Method::Gru => {
            let update = Term {
                monomials: vec![Monomial::of(&[M, T, E]), Monomial::of(&[M, T, M])],
            };
            (update.clone(), update, Term::single(&[M, X]), true)
        }
    };
    AsymptoticCost {
        method,
        keys,
        mask,
        output,
        keys_and_mask_combined: combined,
    }
}

/// Named encoder configuration.
#[derive(Clone, Debug)]
pub struct Preset {
    pub name: &'static str,
    pub config: TemporalConfig,
    /// Size label the configuration is known by.
    pub label: &'static str,
}

fn ltae(embed: usize, heads: usize, d_k: usize, mlp: &[usize]) -> TemporalConfig {
    TemporalConfig::Ltae(LtaeConfig {
        embed_dim: embed,
        seq_len: 24,
        n_head: heads,
        d_k,
        tau: 1000.0,
        mlp_widths: mlp.to_vec(),
        query: QueryScheme::Learned,
    })
}

fn tae(embed: usize, heads: usize, d_k: usize, mlp: &[usize]) -> TemporalConfig {
    TemporalConfig::Tae(TaeConfig {
        embed_dim: embed,
        seq_len: 24,
        n_head: heads,
        d_k,
        tau: 1000.0,
        mlp_widths: mlp.to_vec(),
    })
}

/// Built-in configurations, all with 24-step sequences.
pub fn presets() -> Vec<Preset> {
    let p = |name, label, config| Preset {
        name,
        config,
        label,
    };
    vec![
        p("ltae-default", "default", ltae(256, 16, 8, &[256, 128])),
        p("ltae-9k", "9k", ltae(128, 8, 8, &[128])),
        p("ltae-34k", "34k", ltae(128, 16, 8, &[128, 128])),
        p("ltae-112k", "112k", ltae(256, 16, 8, &[256, 128])),
        p("ltae-288k", "288k", ltae(512, 32, 8, &[512, 128])),
        p("ltae-740k", "740k", ltae(1024, 32, 8, &[1024, 256, 128])),
        p(
            "ltae-3840k",
            "3840k",
            ltae(2048, 64, 8, &[2048, 1024, 256, 128]),
        ),
        p("tae-19k", "19k", tae(64, 2, 8, &[128, 128])),
        p("tae-39k", "39k", tae(64, 4, 8, &[256, 128])),
        p("tae-76k", "76k", tae(128, 4, 8, &[512, 128])),
        p("tae-195k", "195k", tae(256, 4, 8, &[1024, 128])),
        p("tae-360k", "360k", tae(256, 4, 8, &[1024, 256, 128])),
        p("tae-641k", "641k", tae(256, 8, 8, &[2048, 256, 128])),
        p("tae-2592k", "2592k", tae(1024, 8, 16, &[8192, 256, 128])),
    ]
}

pub fn preset(name: &str) -> Option<Preset> {
    presets().into_iter().find(|p| p.name == name)
}

/// Parameter count of the MLP alone, used by callers that report breakdowns.
pub fn mlp_params(widths: &[usize]) -> usize {
    mlp_param_count(widths)
}
