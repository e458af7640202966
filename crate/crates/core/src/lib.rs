//! Lightweight temporal attention encoder (L-TAE) toolkit.
//!
//! - [`tape`]: reverse-mode differentiation over dense [`Tensor`]s.
//! - [`encoders`]: the L-TAE, its day encoding, and the TAE baseline.
//! - [`pipeline`]: pixel-set encoder → temporal encoder → decoder classifier.
//! - [`train`] and [`metrics`]: training loop, k-fold splits, OA and mIoU.
//! - [`complexity`]: exact parameter/FLOP accounting and asymptotic terms.
//! - [`data`]: JSON-lines datasets and a synthetic generator.
// Negated float comparisons below are there to reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod complexity;
pub mod data;
pub mod encoders;
pub mod error;
pub mod gradcheck;
pub mod metrics;
pub mod nn;
pub mod optim;
pub mod pipeline;
pub mod tape;
pub mod tensor;
pub mod train;

pub use error::{ConfigError, DataError, Error, Result};
pub use pipeline::{Model, PipelineConfig, SpatialConfig};
pub use tape::{Tape, Var};
pub use tensor::Tensor;
