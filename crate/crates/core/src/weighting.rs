//! Class histograms and normalized inverse-frequency class weights.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::ser::SerializeMap;
use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::types::LabeledCloud;

/// Lower weight threshold used by default.
pub const DEFAULT_T_MIN: f64 = 0.25;
/// Upper weight threshold; weights are normalized into `[t_min, 1]`.
pub const DEFAULT_T_MAX: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ClassHistogram {
    counts: Vec<u64>,
}

impl ClassHistogram {
    pub fn from_counts(counts: Vec<u64>) -> Self {
        Self { counts }
    }

    pub fn zeros(class_count: usize) -> Self {
        Self {
            counts: vec![0; class_count],
        }
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn class_count(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn add_label(&mut self, label: u32) {
        let i = label as usize;
        if i >= self.counts.len() {
            self.counts.resize(i + 1, 0);
        }
        self.counts[i] += 1;
    }

    /// Elementwise sum; the shorter histogram is zero-extended.
    pub fn merge(mut self, other: &ClassHistogram) -> ClassHistogram {
        if other.counts.len() > self.counts.len() {
            self.counts.resize(other.counts.len(), 0);
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self
    }

    pub fn widen(&mut self, class_count: usize) {
        if class_count > self.counts.len() {
            self.counts.resize(class_count, 0);
        }
    }

    /// Counts divided by the total; all zeros for an empty histogram.
    pub fn normalized(&self) -> Vec<f64> {
        let total = self.total();
        if total == 0 {
            return vec![0.0; self.counts.len()];
        }
        self.counts.iter().map(|&c| c as f64 / total as f64).collect()
    }

    pub fn to_csv(&self) -> String {
        let norm = self.normalized();
        let mut out = String::from("class,count,fraction\n");
        for (c, (count, frac)) in self.counts.iter().zip(norm).enumerate() {
            let _ = writeln!(out, "{c},{count},{frac}");
        }
        out
    }
}

pub fn histogram(cloud: &LabeledCloud) -> ClassHistogram {
    let mut counts = vec![0u64; cloud.class_count()];
    for p in cloud.points() {
        counts[p.label as usize] += 1;
    }
    ClassHistogram { counts }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassWeights {
    weights: Vec<f64>,
    t_min: f64,
    t_max: f64,
}

impl ClassWeights {
    pub fn new(weights: Vec<f64>, t_min: f64, t_max: f64) -> Self {
        Self {
            weights,
            t_min,
            t_max,
        }
    }

    pub fn get(&self, label: u32) -> Option<f64> {
        self.weights.get(label as usize).copied()
    }

    pub fn try_get(&self, label: u32) -> Result<f64> {
        self.get(label).ok_or(Error::MissingWeight(label))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn t_min(&self) -> f64 {
        self.t_min
    }

    pub fn t_max(&self) -> f64 {
        self.t_max
    }

    /// `{ "0": w0, "1": w1, ... }` in class order.
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Inverse of [`ClassWeights::to_json`]. Thresholds are not part of the map and
    /// are recovered as the observed weight range.
    pub fn from_json(text: &str) -> Result<ClassWeights> {
        let map: BTreeMap<String, f64> = serde_json::from_str(text)?;
        let mut indexed = Vec::with_capacity(map.len());
        for (k, w) in map {
            let class: usize = k
                .parse()
                .map_err(|_| Error::Manifest(format!("weight key {k:?} is not a class id")))?;
            indexed.push((class, w));
        }
        indexed.sort_by_key(|&(c, _)| c);
        if indexed.iter().enumerate().any(|(i, &(c, _))| i != c) {
            return Err(Error::Manifest("weight map classes are not contiguous".into()));
        }
        let weights: Vec<f64> = indexed.into_iter().map(|(_, w)| w).collect();
        let t_min = weights.iter().copied().fold(f64::INFINITY, f64::min);
        let t_max = weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Ok(ClassWeights::new(weights, t_min, t_max))
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn read_json(path: &Path) -> Result<ClassWeights> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        ClassWeights::from_json(&text)
    }
}

impl Serialize for ClassWeights {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut map = s.serialize_map(Some(self.weights.len()))?;
        for (c, w) in self.weights.iter().enumerate() {
            map.serialize_entry(&c.to_string(), w)?;
        }
        map.end()
    }
}

/// Min–max normalization of negated class counts into `[t_min, t_max]`: the most
/// frequent present class gets `t_min`, the rarest gets `t_max`.
///
/// Classes with zero count take `t_max`. When every present class has the same
/// count the range collapses and all present classes take the midpoint.
pub fn compute_weights(hist: &ClassHistogram, t_min: f64, t_max: f64) -> Result<ClassWeights> {
    if !(t_min < t_max) || !t_min.is_finite() || !t_max.is_finite() {
        return Err(Error::invalid(format!(
            "weight thresholds must satisfy t_min < t_max, got ({t_min}, {t_max})"
        )));
    }
    let present = hist.counts.iter().copied().filter(|&c| c > 0);
    let (lo, hi) = present.fold((u64::MAX, 0u64), |(lo, hi), c| (lo.min(c), hi.max(c)));
    if hi == 0 {
        return Err(Error::invalid("class histogram has no points"));
    }

    let span = t_max - t_min;
    let range = (hi - lo) as f64;
    let weights = hist
        .counts
        .iter()
        .map(|&c| {
            if c == 0 {
                t_max
            } else if hi == lo {
                0.5 * (t_min + t_max)
            } else if c == lo {
                t_max
            } else {
                // (-c - min(-P)) / (max(-P) - min(-P)) == (hi - c) / (hi - lo)
                let frac = (hi - c) as f64 / range;
                (span * frac + t_min).clamp(t_min, t_max)
            }
        })
        .collect();
    Ok(ClassWeights::new(weights, t_min, t_max))
}

/// `1 / ln(1.2 + p_c)` with `p_c` the class frequency. For comparison reports only.
pub fn compute_weights_log_heuristic(hist: &ClassHistogram) -> Result<ClassWeights> {
    let total = hist.total();
    if total == 0 {
        return Err(Error::invalid("class histogram has no points"));
    }
    let weights = hist
        .counts
        .iter()
        .map(|&c| 1.0 / (1.2 + c as f64 / total as f64).ln())
        .collect();
    Ok(ClassWeights::new(
        weights,
        1.0 / 2.2f64.ln(),
        1.0 / 1.2f64.ln(),
    ))
}
