//! Reverse-mode differentiation over dense `f64` matrices.

mod tape;
mod tensor;

pub use tape::{sigmoid, Tape, Var};
pub use tensor::Tensor;

use crate::error::{ensure, Error, Result};

/// Central-difference gradient of `f` at `params`:
/// `(f(θ + eps·e_i) − f(θ − eps·e_i)) / (2·eps)` per coordinate.
pub fn finite_difference<F>(mut f: F, params: &[f64], eps: f64) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    ensure!(eps > 0.0 && eps.is_finite(), InvalidArgument, "eps must be positive, got {eps}");
    let mut theta = params.to_vec();
    let mut out = Vec::with_capacity(params.len());
    for i in 0..theta.len() {
        let orig = theta[i];
        theta[i] = orig + eps;
        let plus = f(&theta)?;
        theta[i] = orig - eps;
        let minus = f(&theta)?;
        theta[i] = orig;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::Numeric(format!(
                "objective is non-finite around coordinate {i}"
            )));
        }
        out.push((plus - minus) / (2.0 * eps));
    }
    Ok(out)
}

/// `|a − b| / max(|a|, |b|, 1e-8)`.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}
