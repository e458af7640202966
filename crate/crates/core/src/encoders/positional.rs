//! Sine-only day encoding.

use crate::tensor::Tensor;

/// Default characteristic scale of the day encoding.
pub const DEFAULT_TAU: f64 = 1000.0;

/// Component `i` (1-based, `i = 1..=dim`) is `sin(day / tau^(i / dim))`.
///
/// Every component uses the sine; there is no sine/cosine interleaving.
pub fn positional_encoding(day: f64, dim: usize, tau: f64) -> Tensor {
    assert!(dim >= 1, "encoding dimension must be positive");
    Tensor::vector(
        (1..=dim)
            .map(|i| (day / tau.powf(i as f64 / dim as f64)).sin())
            .collect(),
    )
}

/// `[dim × T]` table whose column `t` encodes `days[t]`.
pub fn positional_table(days: &[f64], dim: usize, tau: f64) -> Tensor {
    let t = days.len();
    let mut data = vec![0.0; dim * t];
    for (col, &day) in days.iter().enumerate() {
        for (row, v) in positional_encoding(day, dim, tau).data().iter().enumerate() {
            data[row * t + col] = *v;
        }
    }
    Tensor::new(vec![dim, t], data).expect("non-empty day list")
}

/// Days elapsed since the first observation.
pub fn elapsed_days(days: &[f64]) -> Vec<f64> {
    let start = days.first().copied().unwrap_or(0.0);
    days.iter().map(|d| d - start).collect()
}
