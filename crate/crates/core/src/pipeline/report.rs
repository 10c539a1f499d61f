use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::weighting::ClassHistogram;

/// Class distribution of the raw input against the emitted chunks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionReport {
    pub class_count: usize,
    pub before_counts: Vec<u64>,
    pub after_counts: Vec<u64>,
    pub before_norm: Vec<f64>,
    pub after_norm: Vec<f64>,
    /// Largest class count over smallest nonzero class count.
    pub imbalance_before: f64,
    pub imbalance_after: f64,
    /// Shannon entropy divided by `ln(class_count)`.
    pub entropy_before: f64,
    pub entropy_after: f64,
    /// Log base used by the comparison heuristic weights.
    pub log_heuristic_base: String,
    pub log_heuristic_weights: Vec<f64>,
}

pub fn imbalance_ratio(counts: &[u64]) -> f64 {
    let max = counts.iter().copied().max().unwrap_or(0);
    match counts.iter().copied().filter(|&c| c > 0).min() {
        Some(min) => max as f64 / min as f64,
        None => 0.0,
    }
}

pub fn normalized_entropy(counts: &[u64]) -> f64 {
    let total: u64 = counts.iter().sum();
    if counts.len() < 2 || total == 0 {
        return 0.0;
    }
    let h: f64 = counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / total as f64;
            -p * p.ln()
        })
        .sum();
    h / (counts.len() as f64).ln()
}

impl DistributionReport {
    pub fn new(before: &ClassHistogram, after: &ClassHistogram, log_heuristic: Vec<f64>) -> Self {
        let k = before.class_count().max(after.class_count());
        let mut before = before.clone();
        let mut after = after.clone();
        before.widen(k);
        after.widen(k);
        Self {
            class_count: k,
            before_norm: before.normalized(),
            after_norm: after.normalized(),
            imbalance_before: imbalance_ratio(before.counts()),
            imbalance_after: imbalance_ratio(after.counts()),
            entropy_before: normalized_entropy(before.counts()),
            entropy_after: normalized_entropy(after.counts()),
            before_counts: before.counts().to_vec(),
            after_counts: after.counts().to_vec(),
            log_heuristic_base: "e".into(),
            log_heuristic_weights: log_heuristic,
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("class,before_norm,after_norm\n");
        for c in 0..self.class_count {
            let _ = writeln!(out, "{c},{},{}", self.before_norm[c], self.after_norm[c]);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ratios_and_entropy() {
        assert_eq!(imbalance_ratio(&[100, 0, 1]), 100.0);
        assert_eq!(imbalance_ratio(&[0, 0]), 0.0);
        assert!((normalized_entropy(&[5, 5, 5, 5]) - 1.0).abs() < 1e-15);
        assert_eq!(normalized_entropy(&[5, 0, 0]), 0.0);
        assert_eq!(normalized_entropy(&[5]), 0.0);
    }

    #[test]
    fn norms_sum_to_one() {
        let r = DistributionReport::new(
            &ClassHistogram::from_counts(vec![600, 250, 100, 40, 10]),
            &ClassHistogram::from_counts(vec![300, 200, 150, 100, 90]),
            vec![],
        );
        assert!((r.before_norm.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!((r.after_norm.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(r.imbalance_after < r.imbalance_before);
        assert!(r.entropy_after > r.entropy_before);
        assert!(r.to_csv().starts_with("class,before_norm,after_norm\n0,0.6,"));
    }
}
