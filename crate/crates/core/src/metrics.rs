//! Evaluation metrics. Equal scores always form a single threshold group.

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassificationEval {
    pub auroc: f64,
    pub auprc: f64,
    pub min_pse: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegressionEval {
    pub mse: f64,
    pub rmse: f64,
    pub mae: f64,
}

/// (positives, negatives) per distinct score, sorted by descending score.
fn groups(labels: &[f64], scores: &[f64]) -> Result<(Vec<(usize, usize)>, usize, usize)> {
    ensure!(
        labels.len() == scores.len(),
        InvalidArgument,
        "{} labels but {} scores",
        labels.len(),
        scores.len()
    );
    ensure!(
        labels.iter().all(|&y| y == 0.0 || y == 1.0),
        InvalidArgument,
        "labels must be 0 or 1"
    );
    ensure!(scores.iter().all(|s| !s.is_nan()), InvalidArgument, "NaN score");
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut out: Vec<(usize, usize)> = Vec::new();
    let mut last = None;
    for i in order {
        // -0.0 and 0.0 compare equal and so share a group.
        if last != Some(scores[i]) {
            out.push((0, 0));
            last = Some(scores[i]);
        }
        let g = out.last_mut().expect("group pushed above");
        if labels[i] == 1.0 {
            g.0 += 1;
        } else {
            g.1 += 1;
        }
    }
    let pos = out.iter().map(|g| g.0).sum();
    let neg = out.iter().map(|g| g.1).sum();
    Ok((out, pos, neg))
}

/// Probability that a random positive outscores a random negative, ties
/// counting one half.
pub fn auroc(labels: &[f64], scores: &[f64]) -> Result<f64> {
    let (groups, pos, neg) = groups(labels, scores)?;
    if pos == 0 || neg == 0 {
        return Err(Error::UndefinedMetric("auroc needs both classes".into()));
    }
    let mut negs_below = neg as f64;
    let mut total = 0.0;
    for &(p, n) in &groups {
        negs_below -= n as f64;
        total += p as f64 * (negs_below + 0.5 * n as f64);
    }
    Ok(total / (pos as f64 * neg as f64))
}

/// Average precision: Σ ΔRecall · Precision over descending thresholds.
pub fn auprc(labels: &[f64], scores: &[f64]) -> Result<f64> {
    let (groups, pos, _) = groups(labels, scores)?;
    if pos == 0 {
        return Err(Error::UndefinedMetric("auprc needs a positive label".into()));
    }
    let (mut tp, mut fp, mut ap) = (0usize, 0usize, 0.0);
    for &(p, n) in &groups {
        tp += p;
        fp += n;
        if p > 0 {
            ap += (p as f64 / pos as f64) * (tp as f64 / (tp + fp) as f64);
        }
    }
    Ok(ap)
}

/// Best achievable min(precision, sensitivity) over thresholds `score ≥ t`.
pub fn min_pse(labels: &[f64], scores: &[f64]) -> Result<f64> {
    let (groups, pos, _) = groups(labels, scores)?;
    if pos == 0 {
        return Err(Error::UndefinedMetric("min(P+, Se) needs a positive label".into()));
    }
    let (mut tp, mut fp, mut best) = (0usize, 0usize, 0.0f64);
    for &(p, n) in &groups {
        tp += p;
        fp += n;
        let precision = tp as f64 / (tp + fp) as f64;
        let sensitivity = tp as f64 / pos as f64;
        best = best.max(precision.min(sensitivity));
    }
    Ok(best)
}

pub fn classification_metrics(labels: &[f64], scores: &[f64]) -> Result<ClassificationEval> {
    Ok(ClassificationEval {
        auroc: auroc(labels, scores)?,
        auprc: auprc(labels, scores)?,
        min_pse: min_pse(labels, scores)?,
    })
}

pub fn regression_metrics(y: &[f64], y_hat: &[f64]) -> Result<RegressionEval> {
    ensure!(
        y.len() == y_hat.len(),
        InvalidArgument,
        "{} targets but {} predictions",
        y.len(),
        y_hat.len()
    );
    ensure!(!y.is_empty(), InvalidArgument, "no predictions to evaluate");
    let k = y.len() as f64;
    let (mut se, mut ae) = (0.0, 0.0);
    for (a, b) in y.iter().zip(y_hat) {
        let e = a - b;
        se += e * e;
        ae += e.abs();
    }
    let mse = se / k;
    Ok(RegressionEval {
        mse,
        rmse: mse.sqrt(),
        mae: ae / k,
    })
}
