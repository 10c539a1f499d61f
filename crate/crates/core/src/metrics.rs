//! Confusion matrix and segmentation metrics.
//!
//! Per-class ratios with a zero denominator are 0. A class that appears in
//! neither truth nor prediction is excluded from the macro averages; a class that
//! appears in only one of them is included and scores 0 where undefined.

use std::fmt::Write as _;

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    k: usize,
    /// Row-major; entry `(t, p)` counts points of true class `t` predicted as `p`.
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn zeros(k: usize) -> Self {
        Self {
            k,
            counts: vec![0; k * k],
        }
    }

    pub fn from_rows(rows: &[Vec<u64>]) -> Result<Self> {
        let k = rows.len();
        if rows.iter().any(|r| r.len() != k) {
            return Err(Error::invalid("confusion matrix must be square"));
        }
        Ok(Self {
            k,
            counts: rows.concat(),
        })
    }

    pub fn class_count(&self) -> usize {
        self.k
    }

    pub fn get(&self, truth: usize, pred: usize) -> u64 {
        self.counts[truth * self.k + pred]
    }

    pub fn add(&mut self, truth: usize, pred: usize) {
        self.counts[truth * self.k + pred] += 1;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.k).map(|i| self.get(i, i)).sum()
    }

    pub fn row_sum(&self, truth: usize) -> u64 {
        self.counts[truth * self.k..(truth + 1) * self.k].iter().sum()
    }

    pub fn col_sum(&self, pred: usize) -> u64 {
        (0..self.k).map(|t| self.get(t, pred)).sum()
    }

    pub fn rows(&self) -> Vec<Vec<u64>> {
        self.counts.chunks(self.k.max(1)).map(|r| r.to_vec()).take(self.k).collect()
    }

    /// Each row divided by its sum; empty rows stay zero.
    pub fn row_normalized(&self) -> Vec<Vec<f64>> {
        (0..self.k)
            .map(|t| {
                let sum = self.row_sum(t);
                (0..self.k)
                    .map(|p| if sum == 0 { 0.0 } else { self.get(t, p) as f64 / sum as f64 })
                    .collect()
            })
            .collect()
    }

    /// Elementwise sum of two shards of the same class count.
    pub fn merge(&self, other: &ConfusionMatrix) -> Result<ConfusionMatrix> {
        if self.k != other.k {
            return Err(Error::invalid(format!(
                "cannot merge confusion matrices with {} and {} classes",
                self.k, other.k
            )));
        }
        Ok(ConfusionMatrix {
            k: self.k,
            counts: self.counts.iter().zip(&other.counts).map(|(a, b)| a + b).collect(),
        })
    }

    pub fn to_csv(&self) -> String {
        self.csv_with(|t, p| self.get(t, p).to_string())
    }

    pub fn to_csv_normalized(&self) -> String {
        let norm = self.row_normalized();
        self.csv_with(|t, p| norm[t][p].to_string())
    }

    fn csv_with(&self, cell: impl Fn(usize, usize) -> String) -> String {
        let mut out = String::from("truth\\pred");
        for p in 0..self.k {
            let _ = write!(out, ",{p}");
        }
        out.push('\n');
        for t in 0..self.k {
            let _ = write!(out, "{t}");
            for p in 0..self.k {
                let _ = write!(out, ",{}", cell(t, p));
            }
            out.push('\n');
        }
        out
    }
}

pub fn confusion(truth: &[u32], pred: &[u32], k: usize) -> Result<ConfusionMatrix> {
    if truth.len() != pred.len() {
        return Err(Error::invalid(format!(
            "truth has {} labels but prediction has {}",
            truth.len(),
            pred.len()
        )));
    }
    let mut cm = ConfusionMatrix::zeros(k);
    for (&t, &p) in truth.iter().zip(pred) {
        for l in [t, p] {
            if l as usize >= k {
                return Err(Error::LabelOutOfRange {
                    label: l,
                    class_count: k,
                });
            }
        }
        cm.add(t as usize, p as usize);
    }
    Ok(cm)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassMetrics {
    pub class: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub iou: f64,
    /// True-class point count.
    pub support: u64,
    /// Whether the class takes part in the macro averages.
    pub present: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub k: usize,
    pub total: u64,
    pub accuracy: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    /// Mean of per-class F1, not F1 of the macro precision and recall.
    pub macro_f1: f64,
    pub mean_iou: f64,
    pub weighted_precision: f64,
    pub weighted_recall: f64,
    pub weighted_f1: f64,
    pub per_class: Vec<ClassMetrics>,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn report(cm: &ConfusionMatrix) -> Result<MetricsReport> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::invalid("confusion matrix is empty"));
    }
    let per_class: Vec<ClassMetrics> = (0..cm.class_count())
        .map(|c| {
            let tp = cm.get(c, c);
            let support = cm.row_sum(c);
            let predicted = cm.col_sum(c);
            let fp = predicted - tp;
            let fn_ = support - tp;
            let precision = ratio(tp, tp + fp);
            let recall = ratio(tp, tp + fn_);
            let f1 = if precision + recall > 0.0 {
                2.0 * precision * recall / (precision + recall)
            } else {
                0.0
            };
            // union counted from both marginals is 2tp + fp + fn; minus the intersection
            let iou = ratio(tp, tp + fp + fn_);
            ClassMetrics {
                class: c,
                precision,
                recall,
                f1,
                iou,
                support,
                present: support + predicted > 0,
            }
        })
        .collect();

    let present: Vec<&ClassMetrics> = per_class.iter().filter(|m| m.present).collect();
    let mean = |f: fn(&ClassMetrics) -> f64| -> f64 {
        present.iter().map(|m| f(m)).sum::<f64>() / present.len() as f64
    };
    let weighted = |f: fn(&ClassMetrics) -> f64| -> f64 {
        per_class.iter().map(|m| f(m) * m.support as f64).sum::<f64>() / total as f64
    };

    Ok(MetricsReport {
        k: cm.class_count(),
        total,
        accuracy: ratio(cm.trace(), total),
        macro_precision: mean(|m| m.precision),
        macro_recall: mean(|m| m.recall),
        macro_f1: mean(|m| m.f1),
        mean_iou: mean(|m| m.iou),
        weighted_precision: weighted(|m| m.precision),
        weighted_recall: weighted(|m| m.recall),
        weighted_f1: weighted(|m| m.f1),
        per_class,
    })
}
