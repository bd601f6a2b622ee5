//! Adam with bias correction.

use super::tensor::{e, Element, Tensor};

/// Per-parameter first/second moment estimates plus the shared step count.
/// Defaults: beta1 0.9, beta2 0.999, eps 1e-8.
#[derive(Debug, Clone)]
pub struct AdamState<E> {
    pub beta1: E,
    pub beta2: E,
    pub eps: E,
    t: u64,
    slots: Vec<Moments<E>>,
}

#[derive(Debug, Clone)]
struct Moments<E> {
    m: Vec<E>,
    v: Vec<E>,
}

impl<E: Element> Default for AdamState<E> {
    fn default() -> Self {
        Self::new()
    }
}

impl<E: Element> AdamState<E> {
    pub fn new() -> Self {
        Self {
            beta1: e(0.9),
            beta2: e(0.999),
            eps: e(1e-8),
            t: 0,
            slots: Vec::new(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    /// One update over every parameter tensor, reading each tensor's
    /// gradient buffer. Moment slots are allocated on first use and must
    /// line up with the same parameter list on every call.
    pub fn step(&mut self, lr: E, params: &mut [&mut Tensor<E>]) {
        if self.slots.is_empty() {
            self.slots = params
                .iter()
                .map(|p| Moments {
                    m: vec![E::zero(); p.len()],
                    v: vec![E::zero(); p.len()],
                })
                .collect();
        }
        assert_eq!(self.slots.len(), params.len(), "parameter list changed");
        self.t += 1;
        let t = self.t as i32;
        let bias1 = E::one() - self.beta1.powi(t);
        let bias2 = E::one() - self.beta2.powi(t);
        let one = E::one();

        for (param, slot) in params.iter_mut().zip(&mut self.slots) {
            assert_eq!(param.len(), slot.m.len(), "parameter shape changed");
            let (values, grads) = param.value_and_grad_mut();
            for i in 0..values.len() {
                let g = grads[i];
                slot.m[i] = self.beta1 * slot.m[i] + (one - self.beta1) * g;
                slot.v[i] = self.beta2 * slot.v[i] + (one - self.beta2) * g * g;
                let m_hat = slot.m[i] / bias1;
                let v_hat = slot.v[i] / bias2;
                values[i] = values[i] - lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
    }
}
