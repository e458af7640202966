//! Mini-batch training, evaluation and k-fold splitting.

use std::fmt::Write as _;

use log::info;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::SequenceSample;
use crate::error::{config_err, DataError, Error, Result};
use crate::metrics::{cross_entropy, ConfusionMatrix};
use crate::optim::{self, OptimizerKind};
use crate::pipeline::{argmax, Model};
use crate::tape::Tape;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainSettings {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    #[serde(default)]
    pub optimizer: OptimizerKind,
    pub seed: u64,
    /// Cross-validation folds; 1 trains a single model.
    #[serde(default = "one")]
    pub folds: usize,
}

fn one() -> usize {
    1
}

impl Default for TrainSettings {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 32,
            learning_rate: 1e-3,
            optimizer: OptimizerKind::Adam,
            seed: 0,
            folds: 1,
        }
    }
}

impl TrainSettings {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || self.folds == 0 {
            return Err(config_err("epochs, batch_size and folds must be positive"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(config_err(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        Ok(())
    }
}

/// One row of the metric log.
#[derive(Clone, Debug, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub split: String,
    pub loss: f64,
    pub oa: f64,
    pub miou: f64,
}

pub const METRIC_LOG_HEADER: &str = "epoch,split,loss,oa,miou";

impl EpochMetrics {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{}",
            self.epoch, self.split, self.loss, self.oa, self.miou
        )
    }
}

/// Metric log as CSV text with a header line.
pub fn metric_log_csv(rows: &[EpochMetrics]) -> String {
    let mut out = String::from(METRIC_LOG_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(out, "{}", r.csv_row());
    }
    out
}

#[derive(Clone, Debug)]
pub struct TrainReport {
    pub log: Vec<EpochMetrics>,
    /// 1-based epoch whose parameters were kept.
    pub best_epoch: usize,
    pub best_oa: f64,
}

#[derive(Clone, Debug)]
pub struct Evaluation {
    pub loss: f64,
    pub confusion: ConfusionMatrix,
}

impl Evaluation {
    pub fn oa(&self) -> Result<f64> {
        self.confusion.overall_accuracy()
    }

    pub fn miou(&self) -> Result<f64> {
        self.confusion.mean_iou()
    }
}

fn check_labels(model: &Model, samples: &[SequenceSample]) -> Result<()> {
    let n = model.config().n_classes;
    if let Some(s) = samples.iter().find(|s| s.label >= n) {
        return Err(DataError::Invariant {
            id: s.id.clone(),
            message: format!("label {} outside the {n} model classes", s.label),
        }
        .into());
    }
    Ok(())
}

/// Mean loss and confusion matrix over `samples`, in sample order.
pub fn evaluate(model: &Model, samples: &[SequenceSample]) -> Result<Evaluation> {
    if samples.is_empty() {
        return Err(DataError::Empty.into());
    }
    check_labels(model, samples)?;
    let mut confusion = ConfusionMatrix::new(model.config().n_classes);
    let mut total = 0.0;
    for s in samples {
        let mut tape = Tape::new();
        let bound = model.params().bind(&mut tape, false);
        let fwd = model.forward(&mut tape, &bound, s)?;
        let loss = cross_entropy(&mut tape, fwd.logits, s.label)?;
        total += tape.value(loss).item();
        confusion.record(s.label, argmax(tape.value(fwd.logits).data()));
    }
    Ok(Evaluation {
        loss: total / samples.len() as f64,
        confusion,
    })
}

/// Trains `model` in place and leaves it holding the parameters of the epoch
/// with the best validation accuracy (training accuracy when `validation` is
/// empty; earliest epoch on ties).
pub fn train(
    model: &mut Model,
    train_set: &[SequenceSample],
    validation: &[SequenceSample],
    settings: &TrainSettings,
) -> Result<TrainReport> {
    settings.validate()?;
    if train_set.is_empty() {
        return Err(DataError::Empty.into());
    }
    check_labels(model, train_set)?;
    check_labels(model, validation)?;

    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
    let mut optimizer = optim::build(settings.optimizer, settings.learning_rate, model.params());
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut log = Vec::new();
    let mut best: Option<(usize, f64, crate::nn::ParamStore)> = None;
    let n_classes = model.config().n_classes;

    for epoch in 1..=settings.epochs {
        order.shuffle(&mut rng);
        let mut confusion = ConfusionMatrix::new(n_classes);
        let mut loss_sum = 0.0;
        for (batch_idx, batch) in order.chunks(settings.batch_size).enumerate() {
            let mut tape = Tape::new();
            let bound = model.params().bind(&mut tape, true);
            let mut losses = Vec::with_capacity(batch.len());
            for &i in batch {
                let sample = &train_set[i];
                let fwd = model.forward(&mut tape, &bound, sample)?;
                confusion.record(sample.label, argmax(tape.value(fwd.logits).data()));
                losses.push(cross_entropy(&mut tape, fwd.logits, sample.label)?);
            }
            let rows = losses
                .iter()
                .map(|&l| tape.reshape(l, &[1]))
                .collect::<Result<Vec<_>>>()?;
            let stacked = tape.concat(&rows, 0)?;
            let summed = tape.sum(stacked);
            let loss = tape.scale(summed, 1.0 / batch.len() as f64);
            let value = tape.value(loss).item();
            if !value.is_finite() {
                return Err(Error::Divergence {
                    epoch,
                    batch: batch_idx + 1,
                    loss: value,
                });
            }
            loss_sum += tape.value(summed).item();
            tape.backward(loss)?;
            let grads = model.params().gradients(&tape, &bound);
            if grads.iter().any(|g| !g.all_finite()) {
                return Err(Error::Divergence {
                    epoch,
                    batch: batch_idx + 1,
                    loss: f64::NAN,
                });
            }
            optimizer.step(model.params_mut(), &grads);
        }

        let train_row = EpochMetrics {
            epoch,
            split: "train".into(),
            loss: loss_sum / train_set.len() as f64,
            oa: confusion.overall_accuracy()?,
            miou: confusion.mean_iou()?,
        };
        let score = if validation.is_empty() {
            info!(
                "epoch {epoch}: train loss {:.4} oa {:.4}",
                train_row.loss, train_row.oa
            );
            let oa = train_row.oa;
            log.push(train_row);
            oa
        } else {
            let eval = evaluate(model, validation)?;
            let row = EpochMetrics {
                epoch,
                split: "val".into(),
                loss: eval.loss,
                oa: eval.oa()?,
                miou: eval.miou()?,
            };
            info!(
                "epoch {epoch}: train loss {:.4} oa {:.4} | val loss {:.4} oa {:.4}",
                train_row.loss, train_row.oa, row.loss, row.oa
            );
            let oa = row.oa;
            log.push(train_row);
            log.push(row);
            oa
        };
        if best.as_ref().is_none_or(|(_, oa, _)| score > *oa) {
            best = Some((epoch, score, model.params().clone()));
        }
    }

    let (best_epoch, best_oa, params) = best.expect("at least one epoch");
    *model.params_mut() = params;
    Ok(TrainReport {
        log,
        best_epoch,
        best_oa,
    })
}

/// Train/validation indices of one fold.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Fold {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
}

/// Shuffles `0..n` with `seed` and cuts it into `k` validation folds whose
/// sizes differ by at most one (the first `n % k` folds get the extra item).
pub fn kfold_split(n: usize, k: usize, seed: u64) -> Result<Vec<Fold>> {
    if k < 2 || k > n {
        return Err(config_err(format!(
            "cannot split {n} samples into {k} folds"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (base, extra) = (n / k, n % k);
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let len = base + usize::from(f < extra);
        let validation = order[start..start + len].to_vec();
        let train = order[..start]
            .iter()
            .chain(&order[start + len..])
            .copied()
            .collect();
        folds.push(Fold { train, validation });
        start += len;
    }
    Ok(folds)
}
