//! Scalar reference implementations shared by the integration tests.
#![allow(dead_code, clippy::needless_range_loop)]

use ltae_core::encoders::{LtaeConfig, QueryScheme, TaeConfig};
use ltae_core::nn::ParamStore;
use ltae_core::Tensor;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn param<'a>(store: &'a ParamStore, name: &str) -> &'a Tensor {
    store
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, t)| t)
        .unwrap_or_else(|| panic!("no parameter {name}"))
}

/// `y_j = b_j + Σ_i x_i W[i][j]` with `W` stored `[in × out]` row-major.
pub fn affine(x: &[f64], w: &Tensor, b: &Tensor) -> Vec<f64> {
    let (n_in, n_out) = (w.shape()[0], w.shape()[1]);
    assert_eq!(x.len(), n_in);
    (0..n_out)
        .map(|j| {
            let mut acc = b.data()[j];
            for i in 0..n_in {
                acc += x[i] * w.data()[i * n_out + j];
            }
            acc
        })
        .collect()
}

pub fn mlp(store: &ParamStore, prefix: &str, widths: &[usize], x: &[f64]) -> Vec<f64> {
    let mut h = x.to_vec();
    let layers = widths.len() - 1;
    for l in 0..layers {
        let w = param(store, &format!("{prefix}.{l}.weight"));
        let b = param(store, &format!("{prefix}.{l}.bias"));
        h = affine(&h, w, b);
        if l + 1 < layers {
            h.iter_mut().for_each(|v| *v = v.max(0.0));
        }
    }
    h
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.iter().map(|v| v / z).collect()
}

/// `p[i][t] = sin((days[t] - days[0]) / tau^((i+1)/dim))`.
pub fn encoding(days: &[f64], dim: usize, tau: f64) -> Vec<Vec<f64>> {
    (0..dim)
        .map(|i| {
            days.iter()
                .map(|d| ((d - days[0]) / tau.powf((i + 1) as f64 / dim as f64)).sin())
                .collect()
        })
        .collect()
}

pub struct Oracle {
    pub masks: Vec<Vec<f64>>,
    pub heads: Vec<Vec<f64>>,
    pub output: Vec<f64>,
}

pub fn ltae_oracle(
    store: &ParamStore,
    prefix: &str,
    cfg: &LtaeConfig,
    e: &Tensor,
    days: &[f64],
) -> Oracle {
    let (emb, t_len, k) = (cfg.embed_dim, cfg.seq_len, cfg.d_k);
    let g = emb / cfg.n_head;
    let p = encoding(days, g, cfg.tau);
    let mut masks = Vec::new();
    let mut heads = Vec::new();
    for h in 0..cfg.n_head {
        let x: Vec<Vec<f64>> = (0..t_len)
            .map(|t| (0..g).map(|i| e.at(h * g + i, t) + p[i][t]).collect())
            .collect();
        let kw = param(store, &format!("{prefix}.head{h}.key.weight"));
        let kb = param(store, &format!("{prefix}.head{h}.key.bias"));
        let keys: Vec<Vec<f64>> = x.iter().map(|xt| affine(xt, kw, kb)).collect();
        let query: Vec<f64> = match cfg.query {
            QueryScheme::Learned => param(store, &format!("{prefix}.head{h}.query"))
                .data()
                .to_vec(),
            QueryScheme::TemporalMean => {
                let qw = param(store, &format!("{prefix}.head{h}.query.weight"));
                let qb = param(store, &format!("{prefix}.head{h}.query.bias"));
                let per: Vec<Vec<f64>> = x.iter().map(|xt| affine(xt, qw, qb)).collect();
                (0..k)
                    .map(|j| per.iter().map(|q| q[j]).sum::<f64>() / t_len as f64)
                    .collect()
            }
        };
        let logits: Vec<f64> = keys
            .iter()
            .map(|kt| kt.iter().zip(&query).map(|(a, b)| a * b).sum::<f64>() / (k as f64).sqrt())
            .collect();
        let a = softmax(&logits);
        let o: Vec<f64> = (0..g)
            .map(|i| (0..t_len).map(|t| a[t] * x[t][i]).sum())
            .collect();
        masks.push(a);
        heads.push(o);
    }
    let joined: Vec<f64> = heads.concat();
    let output = mlp(store, &format!("{prefix}.mlp"), &cfg.mlp_widths, &joined);
    Oracle {
        masks,
        heads,
        output,
    }
}

pub fn tae_oracle(
    store: &ParamStore,
    prefix: &str,
    cfg: &TaeConfig,
    e: &Tensor,
    days: &[f64],
) -> Oracle {
    let (emb, t_len, k) = (cfg.embed_dim, cfg.seq_len, cfg.d_k);
    let p = encoding(days, emb, cfg.tau);
    let x: Vec<Vec<f64>> = (0..t_len)
        .map(|t| (0..emb).map(|i| e.at(i, t) + p[i][t]).collect())
        .collect();
    let mut masks = Vec::new();
    let mut heads = Vec::new();
    for h in 0..cfg.n_head {
        let qw = param(store, &format!("{prefix}.head{h}.query.weight"));
        let qb = param(store, &format!("{prefix}.head{h}.query.bias"));
        let kw = param(store, &format!("{prefix}.head{h}.key.weight"));
        let kb = param(store, &format!("{prefix}.head{h}.key.bias"));
        let queries: Vec<Vec<f64>> = x.iter().map(|xt| affine(xt, qw, qb)).collect();
        let master: Vec<f64> = (0..k)
            .map(|j| queries.iter().map(|q| q[j]).sum::<f64>() / t_len as f64)
            .collect();
        let logits: Vec<f64> = x
            .iter()
            .map(|xt| {
                let kt = affine(xt, kw, kb);
                kt.iter().zip(&master).map(|(a, b)| a * b).sum::<f64>() / (k as f64).sqrt()
            })
            .collect();
        let a = softmax(&logits);
        let o: Vec<f64> = (0..emb)
            .map(|i| (0..t_len).map(|t| a[t] * e.at(i, t)).sum())
            .collect();
        masks.push(a);
        heads.push(o);
    }
    let joined: Vec<f64> = heads.concat();
    let output = mlp(store, &format!("{prefix}.mlp"), &cfg.mlp_widths, &joined);
    Oracle {
        masks,
        heads,
        output,
    }
}

pub fn random_input(rng: &mut ChaCha8Rng, emb: usize, t_len: usize) -> (Tensor, Vec<f64>) {
    let data = (0..emb * t_len)
        .map(|_| rng.random_range(-1.5..1.5))
        .collect();
    let mut days: Vec<f64> = (0..t_len).map(|_| rng.random_range(3.0..300.0)).collect();
    days.sort_by(f64::total_cmp);
    (Tensor::matrix(emb, t_len, data).unwrap(), days)
}

pub fn assert_close(a: &[f64], b: &[f64], tol: f64, what: &str) {
    assert_eq!(a.len(), b.len(), "{what}: length");
    for (i, (x, y)) in a.iter().zip(b).enumerate() {
        assert!((x - y).abs() <= tol, "{what}[{i}]: {x} vs {y}");
    }
}
