use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};

/// A dense row-major tensor of `f64` values.
///
/// Parameters live as `Tensor`s between training steps; each step binds them
/// onto a fresh [`Tape`](super::Tape) as leaves and, after the backward pass,
/// pulls the leaf gradients back into [`Tensor::grad`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
    #[serde(skip)]
    grad: Option<Vec<f64>>,
    requires_grad: bool,
}

impl Tensor {
    pub fn new(shape: &[usize], values: Vec<f64>, requires_grad: bool) -> Result<Self> {
        let numel: usize = shape.iter().product();
        ensure!(
            numel == values.len(),
            InvalidArgument,
            "shape {shape:?} holds {numel} values, got {}",
            values.len()
        );
        ensure!(
            values.iter().all(|v| v.is_finite()),
            InvalidArgument,
            "tensor values must be finite"
        );
        Ok(Self {
            shape: shape.to_vec(),
            data: values,
            grad: None,
            requires_grad,
        })
    }

    pub fn zeros(shape: &[usize], requires_grad: bool) -> Self {
        let numel = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![0.0; numel],
            grad: None,
            requires_grad,
        }
    }

    pub fn scalar(value: f64, requires_grad: bool) -> Result<Self> {
        Self::new(&[1], vec![value], requires_grad)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn grad(&self) -> Option<&[f64]> {
        self.grad.as_deref()
    }

    pub fn requires_grad(&self) -> bool {
        self.requires_grad
    }

    /// Turning gradient tracking off also drops any held gradient.
    pub fn set_requires_grad(&mut self, requires_grad: bool) {
        self.requires_grad = requires_grad;
        if !requires_grad {
            self.grad = None;
        }
    }

    /// Adds `g` into the gradient buffer. No-op when the tensor does not
    /// require gradients.
    pub fn accumulate_grad(&mut self, g: &[f64]) -> Result<()> {
        if !self.requires_grad {
            return Ok(());
        }
        ensure!(
            g.len() == self.data.len(),
            Shape,
            "gradient of length {} for tensor of {} values",
            g.len(),
            self.data.len()
        );
        match &mut self.grad {
            Some(buf) => buf.iter_mut().zip(g).for_each(|(b, x)| *b += x),
            None => self.grad = Some(g.to_vec()),
        }
        Ok(())
    }

    pub fn take_grad(&mut self) -> Option<Vec<f64>> {
        self.grad.take()
    }

    pub fn zero_grad(&mut self) {
        self.grad = None;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn create_row_major() {
        let t = Tensor::new(&[2, 2], vec![1.0, 2.0, 3.0, 4.0], false).unwrap();
        assert_eq!(t.shape(), &[2, 2]);
        assert_eq!(t.data(), &[1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn create_empty() {
        let t = Tensor::new(&[0], vec![], false).unwrap();
        assert_eq!(t.numel(), 0);
    }

    #[test]
    fn create_mismatch() {
        assert!(matches!(
            Tensor::new(&[2], vec![1.0, 2.0, 3.0], false),
            Err(crate::Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn create_non_finite() {
        assert!(Tensor::new(&[1], vec![f64::NAN], false).is_err());
        assert!(Tensor::new(&[1], vec![f64::INFINITY], false).is_err());
    }

    #[test]
    fn no_grad_tensor_never_accumulates() {
        let mut t = Tensor::zeros(&[3], false);
        t.accumulate_grad(&[1.0, 2.0, 3.0]).unwrap();
        assert!(t.grad().is_none());
    }

    #[test]
    fn grad_accumulates() {
        let mut t = Tensor::zeros(&[2], true);
        t.accumulate_grad(&[1.0, 2.0]).unwrap();
        t.accumulate_grad(&[0.5, 0.5]).unwrap();
        assert_eq!(t.grad(), Some(&[1.5, 2.5][..]));
        assert!(t.accumulate_grad(&[1.0]).is_err());
    }
}
