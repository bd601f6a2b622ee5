//! Bilinear pooling of the two streams.
//!
//! Each stream output `(n, h, w, c)` is read as `hl x c` local descriptors
//! (row-major over positions); their pairwise interactions are summed over
//! positions into a `c x c` matrix, stabilized by a signed square root and
//! scaled to unit Euclidean norm.

use super::ModelError;
use crate::nn::{axpy, dot, e, Element, Tensor};

/// Pre-normalization intermediates needed by the backward pass.
pub struct BilinearCache<E> {
    /// Raw position-summed interaction matrices, one `c*c` block per item.
    raw: Vec<E>,
    /// After signed sqrt, before norm scaling.
    ssqrt: Vec<E>,
    /// Euclidean norm per item (0 when below the zero guard).
    norms: Vec<E>,
    channels: usize,
}

/// Norms below this keep the feature unscaled instead of dividing by ~0.
const NORM_GUARD: f64 = 1e-12;

fn position_count(dims: &[usize]) -> usize {
    dims[1] * dims[2]
}

/// Fuse two stream outputs into per-item normalized bilinear features
/// `(n, c*c)`.
pub fn bilinear_pool<E: Element>(
    h: &Tensor<E>,
    p: &Tensor<E>,
) -> Result<(Tensor<E>, BilinearCache<E>), ModelError> {
    let (hn, _, _, hc) = h.dim4();
    let (pn, _, _, pc) = p.dim4();
    assert_eq!(hn, pn, "stream batch sizes differ");
    let (h_pos, p_pos) = (position_count(h.dims()), position_count(p.dims()));
    if h_pos != p_pos {
        return Err(ModelError::PositionCountMismatch {
            harmonic: h_pos,
            percussive: p_pos,
        });
    }
    if hc != pc {
        return Err(ModelError::ChannelMismatch {
            harmonic: hc,
            percussive: pc,
        });
    }
    let (n, positions, c) = (hn, h_pos, hc);
    let dim = c * c;

    let mut raw = vec![E::zero(); n * dim];
    for item in 0..n {
        let h_item = &h.data()[item * positions * c..(item + 1) * positions * c];
        let p_item = &p.data()[item * positions * c..(item + 1) * positions * c];
        let b = &mut raw[item * dim..(item + 1) * dim];
        for s in 0..positions {
            let hs = &h_item[s * c..(s + 1) * c];
            let ps = &p_item[s * c..(s + 1) * c];
            for (i, &hv) in hs.iter().enumerate() {
                if hv != E::zero() {
                    axpy(&mut b[i * c..(i + 1) * c], hv, ps);
                }
            }
        }
    }

    let ssqrt: Vec<E> = raw
        .iter()
        .map(|&v| {
            if v < E::zero() {
                -(-v).sqrt()
            } else {
                v.sqrt()
            }
        })
        .collect();

    let guard = e::<E>(NORM_GUARD);
    let mut out = Tensor::zeros(&[n, dim]);
    let mut norms = vec![E::zero(); n];
    for item in 0..n {
        let block = &ssqrt[item * dim..(item + 1) * dim];
        let norm = dot(block, block).sqrt();
        let dst = &mut out.data_mut()[item * dim..(item + 1) * dim];
        if norm > guard {
            norms[item] = norm;
            for (d, &s) in dst.iter_mut().zip(block) {
                *d = s / norm;
            }
        } else {
            norms[item] = E::zero();
            dst.copy_from_slice(block);
        }
    }

    Ok((
        out,
        BilinearCache {
            raw,
            ssqrt,
            norms,
            channels: c,
        },
    ))
}

/// Backward through normalization, signed sqrt, and the position sum.
/// Returns gradients shaped like the two stream outputs.
pub fn bilinear_backward<E: Element>(
    cache: &BilinearCache<E>,
    h: &Tensor<E>,
    p: &Tensor<E>,
    grad_out: &Tensor<E>,
) -> (Tensor<E>, Tensor<E>) {
    let c = cache.channels;
    let dim = c * c;
    let n = h.dims()[0];
    let positions = position_count(h.dims());
    assert_eq!(grad_out.dims(), &[n, dim], "bilinear grad shape mismatch");

    let tiny = e::<E>(NORM_GUARD);
    let half = e::<E>(0.5);
    let mut grad_h = Tensor::zeros(h.dims());
    let mut grad_p = Tensor::zeros(p.dims());

    for item in 0..n {
        let g = &grad_out.data()[item * dim..(item + 1) * dim];
        let ss = &cache.ssqrt[item * dim..(item + 1) * dim];
        let raw = &cache.raw[item * dim..(item + 1) * dim];
        let norm = cache.norms[item];

        // d(x / ||x||) pulls back along g as (g - y (g . y)) / ||x||.
        let mut g_ssqrt = vec![E::zero(); dim];
        if norm > E::zero() {
            let mut g_dot_y = E::zero();
            for (gi, &s) in g.iter().zip(ss) {
                g_dot_y = g_dot_y + *gi * (s / norm);
            }
            for ((dst, &gi), &s) in g_ssqrt.iter_mut().zip(g).zip(ss) {
                *dst = (gi - (s / norm) * g_dot_y) / norm;
            }
        } else {
            g_ssqrt.copy_from_slice(g);
        }

        // d(sign(x) sqrt|x|)/dx = 1 / (2 sqrt|x|); guarded at x = 0.
        let mut g_raw = vec![E::zero(); dim];
        for ((dst, &gs), &x) in g_raw.iter_mut().zip(&g_ssqrt).zip(raw) {
            let denom = x.abs().sqrt().max(tiny);
            *dst = gs * half / denom;
        }

        let h_item = &h.data()[item * positions * c..];
        let p_item = &p.data()[item * positions * c..];
        let gh_item = &mut grad_h.data_mut()[item * positions * c..(item + 1) * positions * c];
        let gp_item = &mut grad_p.data_mut()[item * positions * c..(item + 1) * positions * c];
        for s in 0..positions {
            let hs = &h_item[s * c..(s + 1) * c];
            let ps = &p_item[s * c..(s + 1) * c];
            let ghs = &mut gh_item[s * c..(s + 1) * c];
            for (i, slot) in ghs.iter_mut().enumerate() {
                *slot = dot(&g_raw[i * c..(i + 1) * c], ps);
            }
            let gps = &mut gp_item[s * c..(s + 1) * c];
            for (i, &hv) in hs.iter().enumerate() {
                if hv != E::zero() {
                    axpy(gps, hv, &g_raw[i * c..(i + 1) * c]);
                }
            }
        }
    }
    (grad_h, grad_p)
}
