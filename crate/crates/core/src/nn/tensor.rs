//! Rank<=4 tensors with an optional gradient buffer.
//!
//! Layout is batch x height x width x channels (row-major, channels
//! fastest). The same code paths run in `f32` (training) and `f64`
//! (gradient-check) precision via the [`Element`] trait.

use std::fmt::Debug;

use num_traits::Float;

/// Scalar element type for tensors: `f32` in training mode, `f64` when
/// checking gradients against finite differences.
pub trait Element: Float + Send + Sync + Debug + 'static {
    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;
}

impl Element for f32 {
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    fn to_f64(self) -> f64 {
        self as f64
    }
}

impl Element for f64 {
    fn from_f64(v: f64) -> Self {
        v
    }
    fn to_f64(self) -> f64 {
        self
    }
}

/// Shorthand for converting literals into the element type.
#[inline]
pub fn e<E: Element>(v: f64) -> E {
    E::from_f64(v)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<E> {
    dims: Vec<usize>,
    data: Vec<E>,
    grad: Option<Vec<E>>,
}

impl<E: Element> Tensor<E> {
    pub fn zeros(dims: &[usize]) -> Self {
        assert!(!dims.is_empty() && dims.len() <= 4, "rank must be 1..=4");
        let len = dims.iter().product();
        Self {
            dims: dims.to_vec(),
            data: vec![E::zero(); len],
            grad: None,
        }
    }

    pub fn from_vec(dims: &[usize], data: Vec<E>) -> Self {
        assert!(!dims.is_empty() && dims.len() <= 4, "rank must be 1..=4");
        assert_eq!(
            data.len(),
            dims.iter().product::<usize>(),
            "data length does not match dims {dims:?}"
        );
        Self {
            dims: dims.to_vec(),
            data,
            grad: None,
        }
    }

    /// Attach a zeroed gradient buffer (parameters carry one, activations
    /// usually do not).
    pub fn with_grad(mut self) -> Self {
        self.grad = Some(vec![E::zero(); self.data.len()]);
        self
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn rank(&self) -> usize {
        self.dims.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[E] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [E] {
        &mut self.data
    }

    pub fn has_grad(&self) -> bool {
        self.grad.is_some()
    }

    pub fn grad(&self) -> &[E] {
        self.grad.as_deref().expect("tensor has no gradient buffer")
    }

    pub fn grad_mut(&mut self) -> &mut [E] {
        self.grad.as_deref_mut().expect("tensor has no gradient buffer")
    }

    pub fn zero_grad(&mut self) {
        if let Some(g) = &mut self.grad {
            g.iter_mut().for_each(|v| *v = E::zero());
        }
    }

    /// Split borrows of the value and gradient halves, for optimizer steps.
    pub fn value_and_grad_mut(&mut self) -> (&mut [E], &mut [E]) {
        let grad = self
            .grad
            .as_deref_mut()
            .expect("tensor has no gradient buffer");
        (&mut self.data, grad)
    }

    /// Interpret as (batch, height, width, channels); panics on other ranks.
    pub fn dim4(&self) -> (usize, usize, usize, usize) {
        assert_eq!(self.rank(), 4, "expected rank-4 tensor, got {:?}", self.dims);
        (self.dims[0], self.dims[1], self.dims[2], self.dims[3])
    }

    /// Reinterpret the shape without moving data.
    pub fn reshape(mut self, dims: &[usize]) -> Self {
        assert_eq!(
            dims.iter().product::<usize>(),
            self.data.len(),
            "reshape {:?} -> {dims:?} changes element count",
            self.dims
        );
        assert!(!dims.is_empty() && dims.len() <= 4);
        self.dims = dims.to_vec();
        self
    }

    pub fn iter(&self) -> std::slice::Iter<'_, E> {
        self.data.iter()
    }
}

/// Dot product with four independent accumulators; the fixed association
/// order keeps results bit-reproducible while exposing instruction-level
/// parallelism.
#[inline]
pub fn dot<E: Element>(a: &[E], b: &[E]) -> E {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [E::zero(); 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        acc[0] = acc[0] + x[0] * y[0];
        acc[1] = acc[1] + x[1] * y[1];
        acc[2] = acc[2] + x[2] * y[2];
        acc[3] = acc[3] + x[3] * y[3];
    }
    let mut tail = E::zero();
    for (x, y) in ra.iter().zip(rb) {
        tail = tail + *x * *y;
    }
    ((acc[0] + acc[1]) + (acc[2] + acc[3])) + tail
}

/// `out[i] += scale * src[i]` over slices.
#[inline]
pub fn axpy<E: Element>(out: &mut [E], scale: E, src: &[E]) {
    debug_assert_eq!(out.len(), src.len());
    for (o, &s) in out.iter_mut().zip(src) {
        *o = *o + scale * s;
    }
}
