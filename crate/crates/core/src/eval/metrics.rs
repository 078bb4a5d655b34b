//! Confusion matrix and the derived classification metrics. All reported
//! values are percentages.

use std::collections::BTreeMap;

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::dataset::NUM_CLASSES;
use crate::error::{Error, Result};

/// `counts[true][predicted]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(classes: usize) -> Self {
        Self {
            counts: vec![vec![0; classes]; classes],
        }
    }

    pub fn classes(&self) -> usize {
        self.counts.len()
    }

    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth][predicted]
    }

    pub fn rows(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn add(&mut self, truth: usize, predicted: usize) -> Result<()> {
        let k = self.classes();
        for v in [truth, predicted] {
            if v >= k {
                return Err(Error::InvalidTarget { target: v, classes: k });
            }
        }
        self.counts[truth][predicted] += 1;
        Ok(())
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.classes()).map(|c| self.counts[c][c]).sum()
    }

    pub fn support(&self, class: usize) -> u64 {
        self.counts[class].iter().sum()
    }

    pub fn predicted(&self, class: usize) -> u64 {
        self.counts.iter().map(|row| row[class]).sum()
    }
}

/// Builds a 7-class confusion matrix.
pub fn confusion(predictions: &[usize], targets: &[usize]) -> Result<ConfusionMatrix> {
    confusion_k(predictions, targets, NUM_CLASSES)
}

pub fn confusion_k(predictions: &[usize], targets: &[usize], classes: usize) -> Result<ConfusionMatrix> {
    if predictions.len() != targets.len() {
        return Err(Error::LengthMismatch {
            left: predictions.len(),
            right: targets.len(),
        });
    }
    let mut cm = ConfusionMatrix::new(classes);
    for (&p, &t) in predictions.iter().zip(targets) {
        cm.add(t, p)?;
    }
    Ok(cm)
}

/// Weighted average recall: per-class recall weighted by support. Classes
/// without support are left out. Equal to overall accuracy.
pub fn war(cm: &ConfusionMatrix) -> Result<f64> {
    let n = cm.total();
    if n == 0 {
        return Err(Error::EmptyEvaluation);
    }
    let mut sum = 0.0;
    for c in 0..cm.classes() {
        let support = cm.support(c);
        if support == 0 {
            continue;
        }
        let recall = cm.get(c, c) as f64 / support as f64;
        sum += support as f64 * recall;
    }
    Ok(100.0 * sum / n as f64)
}

/// Position of the target among the logits, best first. Equal logits are
/// ranked by lower class index first.
fn target_rank(row: &[f64], target: usize) -> usize {
    let t = row[target];
    row.iter()
        .enumerate()
        .filter(|&(j, &v)| v > t || (v == t && j < target))
        .count()
}

/// Index of the highest logit, lowest index on ties.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (j, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = j;
        }
    }
    best
}

/// Percentage of rows whose target is among the `k` largest logits.
pub fn top_k_accuracy(logits: ArrayView2<f64>, targets: &[usize], k: usize) -> Result<f64> {
    let classes = logits.ncols();
    if k == 0 || k > classes {
        return Err(Error::InvalidArgument(format!("k = {k} outside 1..={classes}")));
    }
    if logits.nrows() != targets.len() {
        return Err(Error::LengthMismatch {
            left: logits.nrows(),
            right: targets.len(),
        });
    }
    if targets.is_empty() {
        return Err(Error::EmptyEvaluation);
    }
    let mut hits = 0usize;
    for (row, &t) in logits.rows().into_iter().zip(targets) {
        if t >= classes {
            return Err(Error::InvalidTarget { target: t, classes });
        }
        let row = row.to_vec();
        if target_rank(&row, t) < k {
            hits += 1;
        }
    }
    Ok(100.0 * hits as f64 / targets.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    pub support: u64,
    pub recall: f64,
    pub precision: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrecisionF1 {
    pub precision_macro: f64,
    pub f1_macro: f64,
    pub per_class: Vec<ClassScores>,
}

/// Per-class precision/recall/F1 and their unweighted means over classes
/// with nonzero support.
pub fn precision_f1(cm: &ConfusionMatrix) -> Result<PrecisionF1> {
    if cm.total() == 0 {
        return Err(Error::EmptyEvaluation);
    }
    let mut per_class = Vec::with_capacity(cm.classes());
    let (mut p_sum, mut f_sum, mut supported) = (0.0, 0.0, 0usize);
    for c in 0..cm.classes() {
        let tp = cm.get(c, c) as f64;
        let support = cm.support(c);
        let predicted = cm.predicted(c);
        let precision = if predicted == 0 {
            0.0
        } else {
            100.0 * tp / predicted as f64
        };
        let recall = if support == 0 { 0.0 } else { 100.0 * tp / support as f64 };
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        if support > 0 {
            p_sum += precision;
            f_sum += f1;
            supported += 1;
        }
        per_class.push(ClassScores {
            support,
            recall,
            precision,
            f1,
        });
    }
    Ok(PrecisionF1 {
        precision_macro: p_sum / supported as f64,
        f1_macro: f_sum / supported as f64,
        per_class,
    })
}

/// Everything reported for one evaluated dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub dataset: String,
    pub samples: usize,
    pub war: f64,
    pub top_k: BTreeMap<usize, f64>,
    pub precision_macro: f64,
    pub f1_macro: f64,
    pub per_class: Vec<ClassScores>,
    pub confusion: ConfusionMatrix,
}

impl MetricReport {
    /// Top-1 and Top-2 accuracy plus the confusion-matrix metrics.
    pub fn from_logits(dataset: impl Into<String>, logits: ArrayView2<f64>, targets: &[usize]) -> Result<Self> {
        let preds: Vec<usize> = logits.rows().into_iter().map(|r| argmax(&r.to_vec())).collect();
        let cm = confusion_k(&preds, targets, logits.ncols())?;
        let pf = precision_f1(&cm)?;
        let mut top_k = BTreeMap::new();
        for k in [1, 2] {
            top_k.insert(k, top_k_accuracy(logits, targets, k)?);
        }
        Ok(Self {
            dataset: dataset.into(),
            samples: targets.len(),
            war: war(&cm)?,
            top_k,
            precision_macro: pf.precision_macro,
            f1_macro: pf.f1_macro,
            per_class: pf.per_class,
            confusion: cm,
        })
    }

    pub fn top2(&self) -> f64 {
        self.top_k.get(&2).copied().unwrap_or(f64::NAN)
    }
}
