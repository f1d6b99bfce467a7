use crate::data::Dataset;
use crate::error::{ensure, Result};
use crate::imputation::{impute_constant, impute_locf};
use crate::models::BatchLayout;

use super::Protocol;

/// A record as the model sees it under a given protocol.
#[derive(Clone, Debug, PartialEq)]
pub struct PreparedRecord {
    pub values: Vec<f64>,
    /// `false` marks positions the prompt fills; always all-true for the
    /// impute-then-regress protocols.
    pub mask: Vec<bool>,
    pub length: usize,
    pub label: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Prepared {
    pub features: usize,
    pub records: Vec<PreparedRecord>,
}

/// Per-feature means of the observed entries, used by the mean protocol.
pub fn observed_means(ds: &Dataset) -> Vec<f64> {
    let n = ds.feature_count();
    let mut sum = vec![0.0; n];
    let mut count = vec![0usize; n];
    for r in ds.records() {
        for (k, &observed) in r.mask().iter().enumerate() {
            if observed {
                sum[k % n] += r.value(k / n, k % n).expect("observed entry");
                count[k % n] += 1;
            }
        }
    }
    sum.iter()
        .zip(&count)
        .map(|(s, &c)| if c > 0 { s / c as f64 } else { 0.0 })
        .collect()
}

/// Applies the protocol's preprocessing. `fill` is only read by the mean
/// protocol.
pub fn prepare(ds: &Dataset, protocol: Protocol, fill: &[f64]) -> Result<Prepared> {
    let records = ds
        .records()
        .iter()
        .map(|r| {
            let (values, mask) = match protocol {
                Protocol::Pai => (r.model_values(), r.mask().to_vec()),
                Protocol::Locf => (impute_locf(r).values, vec![true; r.mask().len()]),
                Protocol::Zero => (
                    impute_constant(r, &vec![0.0; r.features()])?.values,
                    vec![true; r.mask().len()],
                ),
                Protocol::Mean => (impute_constant(r, fill)?.values, vec![true; r.mask().len()]),
            };
            Ok(PreparedRecord {
                values,
                mask,
                length: r.length(),
                label: r.label(),
            })
        })
        .collect::<Result<_>>()?;
    Ok(Prepared {
        features: ds.feature_count(),
        records,
    })
}

/// Padded, time-major mini-batch.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub x: Vec<f64>,
    pub mask: Vec<bool>,
    pub layout: BatchLayout,
    pub targets: Vec<f64>,
}

/// Row `t·B + b` holds step `t` of record `b`. Padding rows are zeros marked
/// observed, so no prompt value is ever written into them.
pub fn make_batch(prep: &Prepared, indices: &[usize]) -> Result<Batch> {
    ensure!(!indices.is_empty(), InvalidArgument, "empty batch");
    let n = prep.features;
    let b = indices.len();
    let lengths: Vec<usize> = indices.iter().map(|&i| prep.records[i].length).collect();
    let steps = *lengths.iter().max().expect("non-empty");
    let mut x = vec![0.0; steps * b * n];
    let mut mask = vec![true; steps * b * n];
    for (col, &i) in indices.iter().enumerate() {
        let r = &prep.records[i];
        for t in 0..r.length {
            let dst = (t * b + col) * n;
            x[dst..dst + n].copy_from_slice(&r.values[t * n..(t + 1) * n]);
            mask[dst..dst + n].copy_from_slice(&r.mask[t * n..(t + 1) * n]);
        }
    }
    Ok(Batch {
        x,
        mask,
        layout: BatchLayout { lengths, steps },
        targets: indices.iter().map(|&i| prep.records[i].label).collect(),
    })
}
