//! Max pooling, unpadded, plus the global spatial max used by the
//! single-stream ablation heads.

use serde::{Deserialize, Serialize};

use super::tensor::{Element, Tensor};
use super::NnError;

/// Pooling window and strides. `output = floor((in - pool) / stride) + 1`
/// per spatial axis, no padding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoolSpec {
    pub pool_h: usize,
    pub pool_w: usize,
    pub stride_h: usize,
    pub stride_w: usize,
}

impl PoolSpec {
    /// Stride equal to the window, the usual non-overlapping configuration.
    pub fn with_stride_equal_pool(pool_h: usize, pool_w: usize) -> Self {
        Self {
            pool_h,
            pool_w,
            stride_h: pool_h,
            stride_w: pool_w,
        }
    }

    pub fn output_dims(&self, h: usize, w: usize) -> Result<(usize, usize), NnError> {
        if self.pool_h == 0 || self.pool_w == 0 || self.stride_h == 0 || self.stride_w == 0 {
            return Err(NnError::SpatialMismatch(
                "pool dims and strides must be >= 1".to_string(),
            ));
        }
        if self.pool_h > h || self.pool_w > w {
            return Err(NnError::WindowTooLarge {
                input: (h, w),
                pool: (self.pool_h, self.pool_w),
            });
        }
        Ok((
            (h - self.pool_h) / self.stride_h + 1,
            (w - self.pool_w) / self.stride_w + 1,
        ))
    }
}

/// Argmax positions recorded by [`maxpool`] for gradient routing.
pub struct MaxPoolCache {
    in_dims: [usize; 4],
    argmax: Vec<u32>,
}

/// Max over each pooling window. Ties keep the first entry in row-major
/// window scan order.
pub fn maxpool<E: Element>(
    x: &Tensor<E>,
    spec: &PoolSpec,
) -> Result<(Tensor<E>, MaxPoolCache), NnError> {
    let (n, h, w, c) = x.dim4();
    let (oh, ow) = spec.output_dims(h, w)?;
    assert!(x.len() < u32::MAX as usize, "tensor too large for pool cache");

    let mut out = Tensor::zeros(&[n, oh, ow, c]);
    let mut argmax = vec![0u32; n * oh * ow * c];
    let xs = x.data();
    let os = out.data_mut();

    for ni in 0..n {
        for oy in 0..oh {
            let iy0 = oy * spec.stride_h;
            for ox in 0..ow {
                let ix0 = ox * spec.stride_w;
                let out_base = ((ni * oh + oy) * ow + ox) * c;
                for ci in 0..c {
                    let mut best_idx = ((ni * h + iy0) * w + ix0) * c + ci;
                    let mut best = xs[best_idx];
                    for ky in 0..spec.pool_h {
                        let row = ((ni * h + iy0 + ky) * w + ix0) * c + ci;
                        for kx in 0..spec.pool_w {
                            let idx = row + kx * c;
                            if xs[idx] > best {
                                best = xs[idx];
                                best_idx = idx;
                            }
                        }
                    }
                    os[out_base + ci] = best;
                    argmax[out_base + ci] = best_idx as u32;
                }
            }
        }
    }

    Ok((
        out,
        MaxPoolCache {
            in_dims: [n, h, w, c],
            argmax,
        },
    ))
}

/// Route each output gradient to the recorded argmax input cell.
pub fn maxpool_backward<E: Element>(cache: &MaxPoolCache, grad_out: &Tensor<E>) -> Tensor<E> {
    assert_eq!(grad_out.len(), cache.argmax.len(), "pool grad shape mismatch");
    let mut grad_x = Tensor::zeros(&cache.in_dims);
    let gx = grad_x.data_mut();
    for (&idx, &g) in cache.argmax.iter().zip(grad_out.data()) {
        gx[idx as usize] = gx[idx as usize] + g;
    }
    grad_x
}

/// Max over all spatial positions per channel: `(n, h, w, c) -> (n, c)`.
pub fn global_max_pool<E: Element>(x: &Tensor<E>) -> (Tensor<E>, MaxPoolCache) {
    let (n, h, w, c) = x.dim4();
    let mut out = Tensor::zeros(&[n, c]);
    let mut argmax = vec![0u32; n * c];
    let xs = x.data();
    for ni in 0..n {
        let base = ni * h * w * c;
        for ci in 0..c {
            let mut best_idx = base + ci;
            let mut best = xs[best_idx];
            for pos in 1..h * w {
                let idx = base + pos * c + ci;
                if xs[idx] > best {
                    best = xs[idx];
                    best_idx = idx;
                }
            }
            out.data_mut()[ni * c + ci] = best;
            argmax[ni * c + ci] = best_idx as u32;
        }
    }
    (
        out,
        MaxPoolCache {
            in_dims: [n, h, w, c],
            argmax,
        },
    )
}

pub fn global_max_pool_backward<E: Element>(
    cache: &MaxPoolCache,
    grad_out: &Tensor<E>,
) -> Tensor<E> {
    maxpool_backward(cache, grad_out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_by_two_takes_the_max_of_four() {
        let x = Tensor::from_vec(&[1, 2, 2, 1], vec![1.0, 2.0, 3.0, 4.0]);
        let (y, _) = maxpool(&x, &PoolSpec::with_stride_equal_pool(2, 2)).unwrap();
        assert_eq!(y.dims(), &[1, 1, 1, 1]);
        assert_eq!(y.data(), &[4.0]);
    }

    #[test]
    fn table_shapes_80x500_pool_4x10() {
        let x = Tensor::<f32>::zeros(&[1, 80, 500, 3]);
        let (y, _) = maxpool(&x, &PoolSpec::with_stride_equal_pool(4, 10)).unwrap();
        assert_eq!(y.dims(), &[1, 20, 50, 3]);
    }

    #[test]
    fn constant_input_pools_to_constant() {
        let x = Tensor::from_vec(&[1, 6, 6, 2], vec![0.7f64; 72]);
        let (y, _) = maxpool(&x, &PoolSpec::with_stride_equal_pool(3, 2)).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.7));
    }

    #[test]
    fn window_larger_than_input_is_an_error() {
        let x = Tensor::<f32>::zeros(&[1, 3, 3, 1]);
        assert!(matches!(
            maxpool(&x, &PoolSpec::with_stride_equal_pool(4, 2)),
            Err(NnError::WindowTooLarge { .. })
        ));
    }

    #[test]
    fn backward_routes_to_first_max_on_ties() {
        let x = Tensor::from_vec(&[1, 2, 2, 1], vec![5.0, 5.0, 5.0, 5.0]);
        let (_, cache) = maxpool(&x, &PoolSpec::with_stride_equal_pool(2, 2)).unwrap();
        let gy = Tensor::from_vec(&[1, 1, 1, 1], vec![1.0]);
        let gx = maxpool_backward(&cache, &gy);
        assert_eq!(gx.data(), &[1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn shape_formula_holds_over_small_ranges() {
        for h in 1usize..8 {
            for w in 1usize..8 {
                for ph in 1..=h {
                    for pw in 1..=w {
                        for sh in 1..4 {
                            for sw in 1..4 {
                                let spec = PoolSpec {
                                    pool_h: ph,
                                    pool_w: pw,
                                    stride_h: sh,
                                    stride_w: sw,
                                };
                                let x = Tensor::<f32>::zeros(&[1, h, w, 1]);
                                let (y, _) = maxpool(&x, &spec).unwrap();
                                assert_eq!(
                                    y.dims(),
                                    &[1, (h - ph) / sh + 1, (w - pw) / sw + 1, 1]
                                );
                            }
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn global_max_reduces_spatial_dims() {
        let mut x = Tensor::<f64>::zeros(&[2, 3, 4, 5]);
        x.data_mut()[3 * 4 * 5 + 2 * 5 + 3] = 9.0; // batch 1, channel 3
        let (y, _) = global_max_pool(&x);
        assert_eq!(y.dims(), &[2, 5]);
        assert_eq!(y.data()[1 * 5 + 3], 9.0);
    }

    #[test]
    fn global_max_of_constant_channels() {
        let mut x = Tensor::<f64>::zeros(&[1, 2, 2, 3]);
        for cell in x.data_mut().chunks_exact_mut(3) {
            cell.copy_from_slice(&[1.0, -2.0, 0.5]);
        }
        let (y, _) = global_max_pool(&x);
        assert_eq!(y.data(), &[1.0, -2.0, 0.5]);
    }
}
