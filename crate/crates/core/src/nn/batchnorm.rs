//! Per-channel batch normalization over (batch, height, width).

use super::tensor::{e, Element, Tensor};

/// Batch normalization state. Defaults: eps 1e-3, momentum 0.99 for the
/// exponential moving average of the running statistics (biased variance).
#[derive(Debug, Clone)]
pub struct BatchNorm<E> {
    pub gamma: Tensor<E>,
    pub beta: Tensor<E>,
    pub running_mean: Vec<E>,
    pub running_var: Vec<E>,
    pub eps: E,
    pub momentum: E,
}

/// Intermediates recorded by the training-mode forward pass.
pub struct BnCache<E> {
    x_hat: Vec<E>,
    inv_std: Vec<E>,
    dims: Vec<usize>,
    count: usize,
}

impl<E: Element> BatchNorm<E> {
    pub fn new(channels: usize) -> Self {
        let mut gamma = Tensor::zeros(&[channels]).with_grad();
        gamma.data_mut().fill(E::one());
        Self {
            gamma,
            beta: Tensor::zeros(&[channels]).with_grad(),
            running_mean: vec![E::zero(); channels],
            running_var: vec![E::one(); channels],
            eps: e(1e-3),
            momentum: e(0.99),
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    /// Normalize by batch statistics, update running statistics, and record
    /// what the backward pass needs.
    pub fn forward_train(&mut self, x: &Tensor<E>) -> (Tensor<E>, BnCache<E>) {
        let (n, h, w, c) = x.dim4();
        assert_eq!(c, self.channels(), "batchnorm channel mismatch");
        let count = n * h * w;
        let inv_count = E::one() / e::<E>(count as f64);

        let mut mean = vec![E::zero(); c];
        for cell in x.data().chunks_exact(c) {
            for (m, &v) in mean.iter_mut().zip(cell) {
                *m = *m + v;
            }
        }
        for m in mean.iter_mut() {
            *m = *m * inv_count;
        }

        let mut var = vec![E::zero(); c];
        for cell in x.data().chunks_exact(c) {
            for ((vv, &v), &m) in var.iter_mut().zip(cell).zip(&mean) {
                let d = v - m;
                *vv = *vv + d * d;
            }
        }
        for v in var.iter_mut() {
            *v = *v * inv_count;
        }

        let inv_std: Vec<E> = var.iter().map(|&v| E::one() / (v + self.eps).sqrt()).collect();

        let mut x_hat = vec![E::zero(); x.len()];
        let mut out = Tensor::zeros(x.dims());
        let gamma = self.gamma.data();
        let beta = self.beta.data();
        for ((cell, xh), y) in x
            .data()
            .chunks_exact(c)
            .zip(x_hat.chunks_exact_mut(c))
            .zip(out.data_mut().chunks_exact_mut(c))
        {
            for i in 0..c {
                let normalized = (cell[i] - mean[i]) * inv_std[i];
                xh[i] = normalized;
                y[i] = gamma[i] * normalized + beta[i];
            }
        }

        let keep = self.momentum;
        let add = E::one() - keep;
        for i in 0..c {
            self.running_mean[i] = keep * self.running_mean[i] + add * mean[i];
            self.running_var[i] = keep * self.running_var[i] + add * var[i];
        }

        (
            out,
            BnCache {
                x_hat,
                inv_std,
                dims: x.dims().to_vec(),
                count,
            },
        )
    }

    /// Normalize by the running statistics; no state is touched.
    pub fn forward_infer(&self, x: &Tensor<E>) -> Tensor<E> {
        let (_, _, _, c) = x.dim4();
        assert_eq!(c, self.channels(), "batchnorm channel mismatch");
        let gamma = self.gamma.data();
        let beta = self.beta.data();
        let scale: Vec<E> = (0..c)
            .map(|i| gamma[i] / (self.running_var[i] + self.eps).sqrt())
            .collect();
        let mut out = Tensor::zeros(x.dims());
        for (cell, y) in x.data().chunks_exact(c).zip(out.data_mut().chunks_exact_mut(c)) {
            for i in 0..c {
                y[i] = scale[i] * (cell[i] - self.running_mean[i]) + beta[i];
            }
        }
        out
    }

    /// Standard three-term batch-norm backward; accumulates gamma/beta
    /// gradients and returns the input gradient.
    pub fn backward(&mut self, cache: &BnCache<E>, grad_out: &Tensor<E>) -> Tensor<E> {
        let c = self.channels();
        assert_eq!(grad_out.dims(), cache.dims.as_slice());
        let inv_count = E::one() / e::<E>(cache.count as f64);

        let mut sum_g = vec![E::zero(); c];
        let mut sum_g_xhat = vec![E::zero(); c];
        for (g_cell, xh) in grad_out
            .data()
            .chunks_exact(c)
            .zip(cache.x_hat.chunks_exact(c))
        {
            for i in 0..c {
                sum_g[i] = sum_g[i] + g_cell[i];
                sum_g_xhat[i] = sum_g_xhat[i] + g_cell[i] * xh[i];
            }
        }

        let gamma = self.gamma.data();
        let mut grad_x = Tensor::zeros(&cache.dims);
        for ((g_cell, xh), gx) in grad_out
            .data()
            .chunks_exact(c)
            .zip(cache.x_hat.chunks_exact(c))
            .zip(grad_x.data_mut().chunks_exact_mut(c))
        {
            for i in 0..c {
                let centered =
                    g_cell[i] - sum_g[i] * inv_count - xh[i] * sum_g_xhat[i] * inv_count;
                gx[i] = gamma[i] * cache.inv_std[i] * centered;
            }
        }

        for (acc, s) in self.gamma.grad_mut().iter_mut().zip(&sum_g_xhat) {
            *acc = *acc + *s;
        }
        for (acc, s) in self.beta.grad_mut().iter_mut().zip(&sum_g) {
            *acc = *acc + *s;
        }
        grad_x
    }
}
