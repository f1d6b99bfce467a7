use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Dataset, Task};
use crate::error::{ensure, Error, Result};

/// Train/validation/test proportions.
pub const DEFAULT_RATIOS: [f64; 3] = [0.7, 0.1, 0.2];

/// Record indices grouped by stratum: classes `[0, 1]` for classification,
/// label quartiles (ties broken by position) for regression.
pub fn strata(ds: &Dataset) -> Vec<Vec<usize>> {
    match ds.task() {
        Task::Classification => {
            let mut groups = vec![Vec::new(), Vec::new()];
            for (i, r) in ds.records().iter().enumerate() {
                groups[(r.label() == 1.0) as usize].push(i);
            }
            groups
        }
        Task::Regression => {
            let mut order: Vec<usize> = (0..ds.len()).collect();
            let labels = ds.labels();
            order.sort_by(|&a, &b| labels[a].total_cmp(&labels[b]).then(a.cmp(&b)));
            let n = order.len();
            (0..4)
                .map(|q| {
                    let mut g = order[q * n / 4..(q + 1) * n / 4].to_vec();
                    g.sort_unstable();
                    g
                })
                .collect()
        }
    }
}

/// Stratified, seeded partition into train/validation/test.
pub fn split_stratified(ds: &Dataset, ratios: [f64; 3], seed: u64) -> Result<(Dataset, Dataset, Dataset)> {
    ensure!(
        ratios.iter().all(|r| *r >= 0.0) && (ratios.iter().sum::<f64>() - 1.0).abs() < 1e-9,
        InvalidArgument,
        "split ratios must be non-negative and sum to 1, got {ratios:?}"
    );
    let groups = strata(ds);
    for (k, g) in groups.iter().enumerate() {
        if g.len() < 3 {
            return Err(Error::Stratification(format!(
                "stratum {k} has {} records; at least 3 are needed",
                g.len()
            )));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut parts: [Vec<usize>; 3] = Default::default();
    for g in groups {
        let mut g = g;
        g.shuffle(&mut rng);
        let n = g.len() as f64;
        let n_train = (ratios[0] * n).round() as usize;
        let n_val = ((ratios[1] * n).round() as usize).min(g.len() - n_train);
        parts[0].extend_from_slice(&g[..n_train]);
        parts[1].extend_from_slice(&g[n_train..n_train + n_val]);
        parts[2].extend_from_slice(&g[n_train + n_val..]);
    }
    for p in parts.iter_mut() {
        p.sort_unstable();
    }
    Ok((ds.subset(&parts[0]), ds.subset(&parts[1]), ds.subset(&parts[2])))
}
