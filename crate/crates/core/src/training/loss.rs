use crate::autodiff::{Tape, Var};
use crate::error::{ensure, Result};

/// Mean binary cross-entropy of probabilities `p` against 0/1 labels.
pub fn loss_classification(y: &[f64], p: &[f64]) -> Result<f64> {
    check(y, p)?;
    ensure!(
        p.iter().all(|&v| v > 0.0 && v < 1.0),
        InvalidArgument,
        "probabilities must lie strictly inside (0, 1)"
    );
    ensure!(
        y.iter().all(|&v| v == 0.0 || v == 1.0),
        InvalidArgument,
        "labels must be 0 or 1"
    );
    // Through the logit, matching the fused op used in training.
    let z: Vec<f64> = p.iter().map(|&v| (v / (1.0 - v)).ln()).collect();
    Ok(bce_from_logits(y, &z))
}

/// Mean squared error.
pub fn loss_regression(y: &[f64], y_hat: &[f64]) -> Result<f64> {
    check(y, y_hat)?;
    Ok(y.iter().zip(y_hat).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / y.len() as f64)
}

fn check(y: &[f64], y_hat: &[f64]) -> Result<()> {
    ensure!(!y.is_empty(), InvalidArgument, "empty batch");
    ensure!(
        y.len() == y_hat.len(),
        InvalidArgument,
        "{} targets but {} predictions",
        y.len(),
        y_hat.len()
    );
    Ok(())
}

/// `max(z,0) − z·y + ln(1 + e^{−|z|})`, averaged.
pub(crate) fn bce_from_logits(y: &[f64], z: &[f64]) -> f64 {
    let total: f64 = z
        .iter()
        .zip(y)
        .map(|(&z, &y)| z.max(0.0) - z * y + (-z.abs()).exp().ln_1p())
        .sum();
    total / z.len() as f64
}

/// Differentiable batch loss on raw head outputs (`B × 1`).
pub(crate) fn tape_loss(tape: &mut Tape, raw: Var, targets: &[f64], classification: bool) -> Result<Var> {
    ensure!(!targets.is_empty(), InvalidArgument, "empty batch");
    if classification {
        tape.bce_with_logits(raw, targets)
    } else {
        let y = tape.constant(&[targets.len(), 1], targets.to_vec())?;
        let diff = tape.sub(raw, y)?;
        let sq = tape.mul(diff, diff)?;
        tape.mean(sq)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn classification_examples() {
        assert!((loss_classification(&[1.0], &[0.5]).unwrap() - 2f64.ln()).abs() < 1e-15);
        assert!((loss_classification(&[1.0], &[0.25]).unwrap() - 4f64.ln()).abs() < 1e-15);
        assert!((loss_classification(&[1.0, 0.0], &[0.5, 0.5]).unwrap() - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn matches_direct_cross_entropy() {
        let y = [1.0, 0.0, 1.0, 0.0];
        let p = [0.9, 0.2, 0.35, 0.6];
        let direct: f64 = -y
            .iter()
            .zip(&p)
            .map(|(&y, &p): (&f64, &f64)| y * p.ln() + (1.0 - y) * (1.0 - p).ln())
            .sum::<f64>()
            / 4.0;
        assert!((loss_classification(&y, &p).unwrap() - direct).abs() < 1e-14);
    }

    #[test]
    fn regression_examples() {
        assert_eq!(loss_regression(&[1.0, 3.0], &[2.0, 5.0]).unwrap(), 2.5);
        assert_eq!(loss_regression(&[1.0, 3.0], &[1.0, 3.0]).unwrap(), 0.0);
        assert_eq!(loss_regression(&[0.0], &[1.5]).unwrap(), 2.25);
    }

    #[test]
    fn empty_batches_rejected() {
        assert!(loss_classification(&[], &[]).is_err());
        assert!(loss_regression(&[], &[]).is_err());
        let mut tape = Tape::new();
        let raw = tape.constant(&[0, 1], vec![]).unwrap();
        assert!(tape_loss(&mut tape, raw, &[], false).is_err());
    }

    #[test]
    fn tape_losses_agree_with_scalar_forms() {
        let mut tape = Tape::new();
        let raw = tape.constant(&[2, 1], vec![2.0, 5.0]).unwrap();
        let l = tape_loss(&mut tape, raw, &[1.0, 3.0], false).unwrap();
        assert_eq!(tape.item(l), 2.5);
        let z = tape.constant(&[2, 1], vec![0.3, -1.2]).unwrap();
        let l = tape_loss(&mut tape, z, &[1.0, 0.0], true).unwrap();
        assert!((tape.item(l) - bce_from_logits(&[1.0, 0.0], &[0.3, -1.2])).abs() < 1e-15);
    }
}
