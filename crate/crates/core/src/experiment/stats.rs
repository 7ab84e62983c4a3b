use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{ExperimentError, RunRecord};
use crate::vectorize::Variant;

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.96;

/// Accuracy statistics of one (model, training size) group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub model: Variant,
    pub train_size: usize,
    pub mean: f64,
    pub std: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n: usize,
}

impl Summary {
    /// Build from already-computed moments; the interval is
    /// `mean +- 1.96 * std / sqrt(n)`.
    pub fn from_moments(model: Variant, train_size: usize, mean: f64, std: f64, n: usize) -> Self {
        let (ci_low, ci_high) = confidence_interval(mean, std, n);
        Self { model, train_size, mean, std, ci_low, ci_high, n }
    }

    /// The same summary with every real rounded to 4 decimals, as reported.
    pub fn rounded(&self) -> Self {
        Self {
            mean: round4(self.mean),
            std: round4(self.std),
            ci_low: round4(self.ci_low),
            ci_high: round4(self.ci_high),
            ..self.clone()
        }
    }
}

pub fn round4(x: f64) -> f64 {
    (x * 1e4).round() / 1e4
}

pub fn confidence_interval(mean: f64, std: f64, n: usize) -> (f64, f64) {
    let half = Z95 * std / (n as f64).sqrt();
    (mean - half, mean + half)
}

/// Mean and population standard deviation. Summing offsets from the first
/// value keeps identical inputs exact.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let x0 = xs.first().copied().unwrap_or(0.0);
    let mean = x0 + xs.iter().map(|x| x - x0).sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Summaries of complete 10-iteration groups.
pub fn summarize(records: &[RunRecord]) -> Result<Vec<Summary>, ExperimentError> {
    summarize_with(records, 10)
}

/// Summaries over the final accuracies, one per (model, size) group, which
/// must each hold exactly `iterations` distinct iterations. Sorted by model
/// then size.
pub fn summarize_with(records: &[RunRecord], iterations: usize) -> Result<Vec<Summary>, ExperimentError> {
    let mut groups: BTreeMap<(Variant, usize), BTreeMap<u32, f64>> = BTreeMap::new();
    for r in records {
        groups.entry((r.model, r.train_size)).or_default().insert(r.iteration, r.final_accuracy);
    }
    groups
        .into_iter()
        .map(|((model, train_size), accs)| {
            if accs.len() != iterations {
                return Err(ExperimentError::IncompleteGroup { model, train_size, found: accs.len(), expected: iterations });
            }
            let xs: Vec<f64> = accs.into_values().collect();
            let (mean, std) = mean_std(&xs);
            Ok(Summary::from_moments(model, train_size, mean, std, iterations))
        })
        .collect()
}
