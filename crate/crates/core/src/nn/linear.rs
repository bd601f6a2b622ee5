//! Fully connected layer: `y = x W + b`.

use super::tensor::{axpy, dot, Element, Tensor};
use super::NnError;

/// Weights are `(in, out)`, bias `(out)`.
#[derive(Debug, Clone)]
pub struct Linear<E> {
    pub weights: Tensor<E>,
    pub bias: Tensor<E>,
}

impl<E: Element> Linear<E> {
    pub fn new(in_dim: usize, out_dim: usize) -> Self {
        Self {
            weights: Tensor::zeros(&[in_dim, out_dim]).with_grad(),
            bias: Tensor::zeros(&[out_dim]).with_grad(),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weights.dims()[0]
    }

    pub fn out_dim(&self) -> usize {
        self.weights.dims()[1]
    }

    pub fn forward(&self, x: &Tensor<E>) -> Result<Tensor<E>, NnError> {
        assert_eq!(x.rank(), 2, "linear input must be (batch, features)");
        let (n, d) = (x.dims()[0], x.dims()[1]);
        if d != self.in_dim() {
            return Err(NnError::DimMismatch {
                what: "linear input features",
                got: d,
                want: self.in_dim(),
            });
        }
        let out_dim = self.out_dim();
        let mut out = Tensor::zeros(&[n, out_dim]);
        let ws = self.weights.data();
        for (row_in, row_out) in x
            .data()
            .chunks_exact(d)
            .zip(out.data_mut().chunks_exact_mut(out_dim))
        {
            row_out.copy_from_slice(self.bias.data());
            for (i, &xv) in row_in.iter().enumerate() {
                if xv != E::zero() {
                    axpy(row_out, xv, &ws[i * out_dim..(i + 1) * out_dim]);
                }
            }
        }
        Ok(out)
    }

    /// Accumulate parameter gradients and return the input gradient.
    pub fn backward(&mut self, x: &Tensor<E>, grad_out: &Tensor<E>) -> Tensor<E> {
        let (n, d) = (x.dims()[0], x.dims()[1]);
        let out_dim = self.out_dim();
        assert_eq!(grad_out.dims(), &[n, out_dim], "linear grad shape mismatch");

        let ws = self.weights.data();
        let mut grad_x = Tensor::zeros(&[n, d]);
        for (gx_row, gy_row) in grad_x
            .data_mut()
            .chunks_exact_mut(d)
            .zip(grad_out.data().chunks_exact(out_dim))
        {
            for (i, slot) in gx_row.iter_mut().enumerate() {
                *slot = dot(gy_row, &ws[i * out_dim..(i + 1) * out_dim]);
            }
        }

        let dw = self.weights.grad_mut();
        for (x_row, gy_row) in x
            .data()
            .chunks_exact(d)
            .zip(grad_out.data().chunks_exact(out_dim))
        {
            for (i, &xv) in x_row.iter().enumerate() {
                if xv != E::zero() {
                    axpy(&mut dw[i * out_dim..(i + 1) * out_dim], xv, gy_row);
                }
            }
        }
        let db = self.bias.grad_mut();
        for gy_row in grad_out.data().chunks_exact(out_dim) {
            for (acc, &g) in db.iter_mut().zip(gy_row) {
                *acc = *acc + g;
            }
        }
        grad_x
    }
}
