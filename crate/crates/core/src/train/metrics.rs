use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::IGNORE_LABEL;
use crate::tensor::Real;

/// `L × L` pixel counts, rows = truth, columns = prediction.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    classes: usize,
    counts: Vec<u64>,
}

impl Confusion {
    pub fn new(classes: usize) -> Self {
        Self {
            classes,
            counts: vec![0; classes * classes],
        }
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn get(&self, truth: usize, pred: usize) -> u64 {
        self.counts[truth * self.classes + pred]
    }

    /// Counts every pixel whose truth is not [`IGNORE_LABEL`].
    pub fn record(&mut self, truth: &[u8], pred: &[u8]) -> Result<()> {
        if truth.len() != pred.len() {
            return Err(Error::dim(
                "confusion",
                format!("{} labels vs {} predictions", truth.len(), pred.len()),
            ));
        }
        for (&t, &p) in truth.iter().zip(pred) {
            if t == IGNORE_LABEL {
                continue;
            }
            let (t, p) = (usize::from(t), usize::from(p));
            if t >= self.classes || p >= self.classes {
                return Err(Error::Contract(format!(
                    "class id {} outside {} classes",
                    t.max(p),
                    self.classes
                )));
            }
            self.counts[t * self.classes + p] += 1;
        }
        Ok(())
    }

    pub fn merge(&mut self, other: &Confusion) {
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn rows(&self) -> Vec<Vec<u64>> {
        self.counts.chunks(self.classes).map(<[u64]>::to_vec).collect()
    }

    /// `(tp, fp, fn)` of class `k`.
    pub fn counts_for(&self, k: usize) -> (u64, u64, u64) {
        let tp = self.get(k, k);
        let row: u64 = (0..self.classes).map(|p| self.get(k, p)).sum();
        let col: u64 = (0..self.classes).map(|t| self.get(t, k)).sum();
        (tp, col - tp, row - tp)
    }

    /// `2TP / (2TP + FP + FN)`, or `None` when the class never occurs in
    /// truth or prediction.
    pub fn f1(&self, k: usize) -> Option<f64> {
        f1_score(self.counts_for(k))
    }

    /// Unweighted mean over classes with a defined F1.
    pub fn mean_f1(&self) -> f64 {
        let scores: Vec<f64> = (0..self.classes).filter_map(|k| self.f1(k)).collect();
        if scores.is_empty() {
            0.0
        } else {
            scores.iter().sum::<f64>() / scores.len() as f64
        }
    }
}

pub fn f1_score((tp, fp, fn_): (u64, u64, u64)) -> Option<f64> {
    let denom = 2 * tp + fp + fn_;
    (denom > 0).then(|| (2 * tp) as f64 / denom as f64)
}

/// Per-pixel class with the highest probability; ties go to the lower id.
/// `probs` is `[L, pixels]`.
pub fn argmax_classes<T: Real>(probs: &[T], classes: usize) -> Vec<u8> {
    let pixels = probs.len() / classes;
    (0..pixels)
        .map(|i| {
            let mut best = 0;
            for k in 1..classes {
                if probs[k * pixels + i] > probs[best * pixels + i] {
                    best = k;
                }
            }
            best as u8
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub name: String,
    /// Evaluated pixels whose truth is this class.
    pub count: u64,
    /// `None` when the class is absent from truth and prediction.
    pub f1: Option<f64>,
}

/// Wall-clock timings. Kept apart from [`Metrics`] so metrics files are
/// reproducible byte for byte.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub train_seconds_per_epoch: Option<f64>,
    pub test_seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub confusion: Vec<Vec<u64>>,
    pub classes: Vec<ClassMetrics>,
    pub mean_f1: f64,
    /// Classes absent from both truth and prediction; they have no F1 and do
    /// not enter `mean_f1`.
    pub excluded_from_mean: Vec<String>,
    /// Pixels evaluated (sum of the confusion matrix).
    pub pixels: u64,
}

impl Metrics {
    pub fn from_confusion(conf: &Confusion, names: &[String]) -> Self {
        let classes: Vec<ClassMetrics> = (0..conf.classes())
            .map(|k| ClassMetrics {
                name: names.get(k).cloned().unwrap_or_else(|| format!("class_{k}")),
                count: (0..conf.classes()).map(|p| conf.get(k, p)).sum(),
                f1: conf.f1(k),
            })
            .collect();
        Self {
            confusion: conf.rows(),
            excluded_from_mean: classes.iter().filter(|c| c.f1.is_none()).map(|c| c.name.clone()).collect(),
            classes,
            mean_f1: conf.mean_f1(),
            pixels: conf.total(),
        }
    }

    pub fn class_f1(&self, name: &str) -> Option<f64> {
        self.classes.iter().find(|c| c.name == name).and_then(|c| c.f1)
    }
}
