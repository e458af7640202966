//! Classification loss and confusion-matrix metrics.

use std::fmt;

use crate::error::{Error, Result};
use crate::tape::{Tape, Var};

/// `-log softmax(logits)[label]` as a scalar on the tape.
pub fn cross_entropy(tape: &mut Tape, logits: Var, label: usize) -> Result<Var> {
    let n = tape.value(logits).len();
    if label >= n {
        return Err(Error::Contract(format!(
            "label {label} out of range for {n} classes"
        )));
    }
    let row = tape.reshape(logits, &[1, n])?;
    let logp = tape.log_softmax(row)?;
    let picked = tape.slice(logp, 1, label, 1)?;
    let nll = tape.scale(picked, -1.0);
    tape.reshape(nll, &[])
}

/// Square count matrix; rows are true classes, columns predictions.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfusionMatrix {
    n_classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(n_classes: usize) -> Self {
        Self {
            n_classes,
            counts: vec![0; n_classes * n_classes],
        }
    }

    pub fn from_rows(rows: &[Vec<u64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::Contract("confusion matrix must be square".into()));
        }
        Ok(Self {
            n_classes: n,
            counts: rows.concat(),
        })
    }

    pub fn record(&mut self, truth: usize, predicted: usize) {
        assert!(
            truth < self.n_classes && predicted < self.n_classes,
            "class out of range"
        );
        self.counts[truth * self.n_classes + predicted] += 1;
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth * self.n_classes + predicted]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn correct(&self) -> u64 {
        (0..self.n_classes).map(|c| self.get(c, c)).sum()
    }

    pub fn row_sum(&self, c: usize) -> u64 {
        (0..self.n_classes).map(|p| self.get(c, p)).sum()
    }

    pub fn col_sum(&self, c: usize) -> u64 {
        (0..self.n_classes).map(|t| self.get(t, c)).sum()
    }

    /// IoU of each class, `None` where the class is absent from both truth
    /// and predictions.
    pub fn per_class_iou(&self) -> Vec<Option<f64>> {
        (0..self.n_classes)
            .map(|c| {
                let hit = self.get(c, c);
                let union = self.row_sum(c) + self.col_sum(c) - hit;
                (union > 0).then(|| hit as f64 / union as f64)
            })
            .collect()
    }

    pub fn overall_accuracy(&self) -> Result<f64> {
        overall_accuracy(self)
    }

    pub fn mean_iou(&self) -> Result<f64> {
        mean_iou(self)
    }
}

impl fmt::Display for ConfusionMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for t in 0..self.n_classes {
            let row: Vec<String> = (0..self.n_classes)
                .map(|p| self.get(t, p).to_string())
                .collect();
            writeln!(f, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Fraction of samples on the diagonal.
pub fn overall_accuracy(cm: &ConfusionMatrix) -> Result<f64> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::UndefinedMetric(
            "overall accuracy of an empty confusion matrix".into(),
        ));
    }
    Ok(cm.correct() as f64 / total as f64)
}

/// Mean of per-class IoU over the classes with a non-empty union.
pub fn mean_iou(cm: &ConfusionMatrix) -> Result<f64> {
    let ious: Vec<f64> = cm.per_class_iou().into_iter().flatten().collect();
    if ious.is_empty() {
        return Err(Error::UndefinedMetric(
            "mIoU with every class union empty".into(),
        ));
    }
    Ok(ious.iter().sum::<f64>() / ious.len() as f64)
}
