//! Dataset perturbations for the robustness sweeps.

use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{strata, Dataset};
use crate::error::{ensure, Error, Result};

/// Hides uniformly chosen observed entries until the global missing rate
/// reaches `target_rate`. The hidden set depends only on the dataset, the
/// target and the seed.
pub fn inject_missing(ds: &Dataset, target_rate: f64, seed: u64) -> Result<Dataset> {
    ensure!(
        (0.0..1.0).contains(&target_rate),
        InvalidArgument,
        "target missing rate must lie in [0, 1), got {target_rate}"
    );
    let total = ds.total_entries();
    let missing = ds.missing_count();
    let current = ds.missing_rate();
    ensure!(
        target_rate >= current || total == 0,
        InvalidArgument,
        "target missing rate {target_rate} is below the current rate {current}"
    );
    let wanted = ((target_rate * total as f64) - 1e-9).ceil().max(0.0) as usize;
    let flips = wanted.saturating_sub(missing);
    if flips == 0 {
        return Ok(ds.clone());
    }
    let observed: Vec<(usize, usize)> = ds
        .records()
        .iter()
        .enumerate()
        .flat_map(|(r, rec)| {
            rec.mask()
                .iter()
                .enumerate()
                .filter(|(_, &m)| m)
                .map(move |(e, _)| (r, e))
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut masks: Vec<Vec<bool>> = ds.records().iter().map(|r| r.mask().to_vec()).collect();
    for i in index::sample(&mut rng, observed.len(), flips.min(observed.len())) {
        let (r, e) = observed[i];
        masks[r][e] = false;
    }
    let records = ds
        .records()
        .iter()
        .zip(masks)
        .map(|(rec, m)| rec.with_mask(m))
        .collect();
    Ok(ds.with_records(records))
}

/// Stratified subset keeping `round(fraction · n)` records of every stratum.
pub fn subsample(train: &Dataset, fraction: f64, seed: u64) -> Result<Dataset> {
    ensure!(
        fraction > 0.0 && fraction <= 1.0,
        InvalidArgument,
        "subsample fraction must lie in (0, 1], got {fraction}"
    );
    if fraction == 1.0 {
        return Ok(train.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keep = Vec::new();
    for (k, mut g) in strata(train).into_iter().enumerate() {
        if g.is_empty() {
            continue;
        }
        let n = (fraction * g.len() as f64).round() as usize;
        if n == 0 {
            return Err(Error::Subsample(format!(
                "fraction {fraction} leaves stratum {k} ({} records) empty",
                g.len()
            )));
        }
        g.shuffle(&mut rng);
        keep.extend_from_slice(&g[..n]);
    }
    keep.sort_unstable();
    Ok(train.subset(&keep))
}
