//! Synthetic generator with random or value-dependent missingness.
//!
//! Each record follows a low-rank latent AR(1) process around a record-level
//! offset, mapped to `N` features by a fixed random loading matrix. Labels are
//! computed from the complete trajectories before any masking, from per-feature
//! time means and mean magnitudes. In informative mode large-magnitude values
//! are the ones most likely to go missing, so the mask itself carries label
//! signal that a zero fill hides.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{Dataset, Provenance, Task, TimeSeriesRecord};
use crate::autodiff::sigmoid;
use crate::error::{ensure, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MissingMode {
    /// Every entry is dropped independently with the base rate.
    Random,
    /// Drop probability grows with the entry's standardized magnitude.
    Informative,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenConfig {
    pub record_count: usize,
    pub feature_count: usize,
    pub min_length: usize,
    pub max_length: usize,
    pub missing_rate: f64,
    pub missing_mode: MissingMode,
    pub task: Task,
    #[serde(default = "default_noise")]
    pub label_noise: f64,
    pub seed: u64,
}

fn default_noise() -> f64 {
    1.0
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            record_count: 2000,
            feature_count: 8,
            min_length: 10,
            max_length: 30,
            missing_rate: 0.4,
            missing_mode: MissingMode::Informative,
            task: Task::Classification,
            label_noise: 1.0,
            seed: 7,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        ensure!(self.feature_count >= 1, InvalidArgument, "feature_count must be positive");
        ensure!(self.min_length >= 1, InvalidArgument, "min_length must be at least 1");
        ensure!(
            self.max_length >= self.min_length,
            InvalidArgument,
            "max_length {} below min_length {}",
            self.max_length,
            self.min_length
        );
        ensure!(
            (0.0..1.0).contains(&self.missing_rate),
            InvalidArgument,
            "missing_rate must lie in [0, 1), got {}",
            self.missing_rate
        );
        ensure!(
            self.label_noise >= 0.0 && self.label_noise.is_finite(),
            InvalidArgument,
            "label_noise must be non-negative"
        );
        Ok(())
    }
}

const AR_COEF: f64 = 0.8;
const OBS_NOISE: f64 = 0.1;
const LOGIT_SCALE: f64 = 3.0;
/// Standard-normal 80th percentile; puts roughly a fifth of records positive.
const POSITIVE_QUANTILE: f64 = 0.841_621_233_572_914_3;
const INFORMATIVE_SLOPE: f64 = 2.0;

pub fn synthesize(config: &GenConfig) -> Result<Dataset> {
    config.validate()?;
    let n = config.feature_count;
    let k = n.clamp(1, 4);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut label_rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x6c61_6265_6c73);
    let mut mask_rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x6d61_736b_7321);
    let normal = |rng: &mut ChaCha8Rng| -> f64 { rng.sample(StandardNormal) };

    let loading: Vec<f64> = (0..n * k).map(|_| normal(&mut rng) / (k as f64).sqrt()).collect();
    let w_mean: Vec<f64> = (0..n).map(|_| normal(&mut rng)).collect();
    let w_abs: Vec<f64> = (0..n).map(|_| normal(&mut rng).abs()).collect();

    let innovation = (1.0 - AR_COEF * AR_COEF).sqrt();
    let mut trajectories = Vec::with_capacity(config.record_count);
    let mut scores = Vec::with_capacity(config.record_count);
    for _ in 0..config.record_count {
        let len = rng.random_range(config.min_length..=config.max_length);
        let offset: Vec<f64> = (0..k).map(|_| normal(&mut rng)).collect();
        let mut z: Vec<f64> = (0..k).map(|_| normal(&mut rng)).collect();
        let mut x = Vec::with_capacity(len * n);
        for t in 0..len {
            if t > 0 {
                for zj in z.iter_mut() {
                    *zj = AR_COEF * *zj + innovation * normal(&mut rng);
                }
            }
            for i in 0..n {
                let mut v = OBS_NOISE * normal(&mut rng);
                for j in 0..k {
                    v += loading[i * k + j] * (offset[j] + z[j]);
                }
                x.push(v);
            }
        }
        let mut score = 0.0;
        for i in 0..n {
            let col = (0..len).map(|t| x[t * n + i]);
            let mean = col.clone().sum::<f64>() / len as f64;
            let mag = col.map(f64::abs).sum::<f64>() / len as f64;
            score += w_mean[i] * mean + w_abs[i] * mag;
        }
        scores.push(score);
        trajectories.push((len, x));
    }

    let standardized = standardize(&scores);
    let labels: Vec<f64> = standardized
        .iter()
        .map(|&s| match config.task {
            Task::Classification => {
                let logit = LOGIT_SCALE * (s - POSITIVE_QUANTILE);
                let u: f64 = label_rng.random_range(f64::EPSILON..1.0);
                let noise = (u / (1.0 - u)).ln();
                if logit + config.label_noise * noise > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Task::Regression => {
                let eps: f64 = label_rng.sample(StandardNormal);
                (3.0 + 1.5 * s + config.label_noise * eps).max(0.0)
            }
        })
        .collect();

    let drop_prob = drop_probabilities(config, &trajectories);
    let width = (config.record_count.max(1) as f64).log10() as usize + 1;
    let mut records = Vec::with_capacity(config.record_count);
    for (r, ((len, x), label)) in trajectories.into_iter().zip(labels).enumerate() {
        let mask: Vec<bool> = (0..len * n)
            .map(|e| {
                let p = match &drop_prob {
                    DropProb::None => return true,
                    DropProb::Constant(p) => *p,
                    DropProb::PerEntry(ps) => ps[r][e],
                };
                mask_rng.random::<f64>() >= p
            })
            .collect();
        records.push(TimeSeriesRecord::new(format!("s{r:0width$}"), len, n, x, mask, label)?);
    }
    Dataset::new(
        records,
        n,
        config.task,
        Provenance::Synthetic {
            config: config.clone(),
        },
    )
}

enum DropProb {
    None,
    Constant(f64),
    PerEntry(Vec<Vec<f64>>),
}

fn drop_probabilities(config: &GenConfig, trajectories: &[(usize, Vec<f64>)]) -> DropProb {
    let p = config.missing_rate;
    if p == 0.0 {
        return DropProb::None;
    }
    if config.missing_mode == MissingMode::Random {
        return DropProb::Constant(p);
    }
    let n = config.feature_count;
    let mut sum = vec![0.0; n];
    let mut sq = vec![0.0; n];
    let mut count = 0usize;
    for (_, x) in trajectories {
        for (e, &v) in x.iter().enumerate() {
            sum[e % n] += v;
            sq[e % n] += v * v;
        }
        count += x.len() / n;
    }
    let c = count.max(1) as f64;
    let mean: Vec<f64> = sum.iter().map(|s| s / c).collect();
    let std: Vec<f64> = sq
        .iter()
        .zip(&mean)
        .map(|(s, m)| (s / c - m * m).max(0.0).sqrt().max(1e-12))
        .collect();
    let magnitude: Vec<Vec<f64>> = trajectories
        .iter()
        .map(|(_, x)| {
            x.iter()
                .enumerate()
                .map(|(e, &v)| ((v - mean[e % n]) / std[e % n]).abs())
                .collect()
        })
        .collect();
    let total: usize = magnitude.iter().map(Vec::len).sum();
    let avg_prob = |bias: f64| -> f64 {
        magnitude
            .iter()
            .flatten()
            .map(|&a| sigmoid(bias + INFORMATIVE_SLOPE * (a - 1.0)))
            .sum::<f64>()
            / total.max(1) as f64
    };
    // The average drop probability is increasing in the bias; bisect for `p`.
    let (mut lo, mut hi) = (-60.0, 60.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if avg_prob(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let bias = 0.5 * (lo + hi);
    DropProb::PerEntry(
        magnitude
            .into_iter()
            .map(|row| {
                row.into_iter()
                    .map(|a| sigmoid(bias + INFORMATIVE_SLOPE * (a - 1.0)))
                    .collect()
            })
            .collect(),
    )
}

fn standardize(xs: &[f64]) -> Vec<f64> {
    if xs.is_empty() {
        return Vec::new();
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let std = if var > 0.0 { var.sqrt() } else { 1.0 };
    xs.iter().map(|x| (x - mean) / std).collect()
}
