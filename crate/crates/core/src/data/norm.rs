use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{ensure, Result};

/// Per-feature mean and population standard deviation over observed entries.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// Features never observed get mean 0, std 1; constant features get std 1.
/// Both cases are logged as warnings.
pub fn compute_norm_stats(train: &Dataset) -> NormStats {
    let n = train.feature_count();
    let mut count = vec![0usize; n];
    let mut sum = vec![0.0; n];
    for r in train.records() {
        for t in 0..r.length() {
            for j in 0..n {
                if let Some(v) = r.value(t, j) {
                    count[j] += 1;
                    sum[j] += v;
                }
            }
        }
    }
    let mean: Vec<f64> = (0..n)
        .map(|j| if count[j] > 0 { sum[j] / count[j] as f64 } else { 0.0 })
        .collect();
    let mut sq = vec![0.0; n];
    for r in train.records() {
        for t in 0..r.length() {
            for j in 0..n {
                if let Some(v) = r.value(t, j) {
                    sq[j] += (v - mean[j]).powi(2);
                }
            }
        }
    }
    let std = (0..n)
        .map(|j| {
            if count[j] == 0 {
                log::warn!("feature {} is never observed in training; using mean 0, std 1", j + 1);
                return 1.0;
            }
            let s = (sq[j] / count[j] as f64).sqrt();
            if s > 0.0 && s.is_finite() {
                s
            } else {
                log::warn!("feature {} has zero variance in training; using std 1", j + 1);
                1.0
            }
        })
        .collect();
    NormStats { mean, std }
}

/// Z-scores observed entries; masks and placeholders are left as they are.
pub fn apply_normalization(ds: &Dataset, stats: &NormStats) -> Result<Dataset> {
    let n = ds.feature_count();
    ensure!(
        stats.mean.len() == n && stats.std.len() == n,
        InvalidInput,
        "normalization stats cover {} features, dataset has {n}",
        stats.mean.len()
    );
    let records = ds
        .records()
        .iter()
        .map(|r| r.map_observed(|j, v| (v - stats.mean[j]) / stats.std[j]))
        .collect();
    Ok(ds.with_records(records))
}
