//! Same-padded 2-D cross-correlation.

use rayon::prelude::*;

use super::tensor::{dot, Element, Tensor};
use super::NnError;

/// Convolution layer with weights `(out_ch, kh, kw, in_ch)` and a
/// per-output-channel bias. Padding is "same": the spatial dims of the
/// output equal the input's, with zeros outside. Even kernels pad one less
/// on the leading side, `pad = (k - 1) / 2`.
#[derive(Debug, Clone)]
pub struct Conv2d<E> {
    pub weights: Tensor<E>,
    pub bias: Tensor<E>,
}

impl<E: Element> Conv2d<E> {
    pub fn new(out_ch: usize, kh: usize, kw: usize, in_ch: usize) -> Self {
        assert!(kh >= 1 && kw >= 1 && out_ch >= 1 && in_ch >= 1);
        Self {
            weights: Tensor::zeros(&[out_ch, kh, kw, in_ch]).with_grad(),
            bias: Tensor::zeros(&[out_ch]).with_grad(),
        }
    }

    pub fn out_channels(&self) -> usize {
        self.weights.dims()[0]
    }

    pub fn kernel(&self) -> (usize, usize) {
        (self.weights.dims()[1], self.weights.dims()[2])
    }

    pub fn in_channels(&self) -> usize {
        self.weights.dims()[3]
    }

    fn check_input(&self, x: &Tensor<E>) -> Result<(), NnError> {
        let (_, _, _, ci) = x.dim4();
        if ci != self.in_channels() {
            return Err(NnError::ChannelMismatch {
                got: ci,
                want: self.in_channels(),
            });
        }
        Ok(())
    }

    pub fn forward(&self, x: &Tensor<E>) -> Result<Tensor<E>, NnError> {
        self.check_input(x)?;
        let (n, h, w, ci) = x.dim4();
        let co = self.out_channels();
        let (kh, kw) = self.kernel();
        let (ph, pw) = ((kh - 1) / 2, (kw - 1) / 2);

        let mut out = Tensor::zeros(&[n, h, w, co]);
        let xs = x.data();
        let ws = self.weights.data();
        let bias = self.bias.data();
        let w_k = kh * kw * ci;

        // One output row (fixed n, oy) per work item; rows are disjoint so
        // threads never share output cells and results are bit-stable.
        out.data_mut()
            .par_chunks_mut(w * co)
            .enumerate()
            .for_each(|(row_idx, out_row)| {
                let ni = row_idx / h;
                let oy = row_idx % h;
                let ky_lo = ph.saturating_sub(oy);
                let ky_hi = kh.min(h + ph - oy);
                for ox in 0..w {
                    let kx_lo = pw.saturating_sub(ox);
                    let kx_hi = kw.min(w + pw - ox);
                    let cell = &mut out_row[ox * co..(ox + 1) * co];
                    for (c, slot) in cell.iter_mut().enumerate() {
                        let w_base = c * w_k;
                        let mut acc = bias[c];
                        for ky in ky_lo..ky_hi {
                            let iy = oy + ky - ph;
                            let x_row = ((ni * h + iy) * w) * ci;
                            if ci == 1 {
                                // Single input channel: the kernel row and the
                                // input row are both contiguous along kx.
                                let ix0 = ox + kx_lo - pw;
                                let len = kx_hi - kx_lo;
                                acc = acc
                                    + dot(
                                        &xs[x_row + ix0..x_row + ix0 + len],
                                        &ws[w_base + ky * kw + kx_lo
                                            ..w_base + ky * kw + kx_lo + len],
                                    );
                            } else {
                                for kx in kx_lo..kx_hi {
                                    let ix = ox + kx - pw;
                                    let xo = x_row + ix * ci;
                                    let wo = w_base + (ky * kw + kx) * ci;
                                    acc = acc + dot(&xs[xo..xo + ci], &ws[wo..wo + ci]);
                                }
                            }
                        }
                        *slot = acc;
                    }
                }
            });
        Ok(out)
    }

    /// Accumulate weight/bias gradients and return the input gradient
    /// unless `need_input_grad` is false (first layers feed data, not
    /// activations). `x` must be the forward input.
    pub fn backward(
        &mut self,
        x: &Tensor<E>,
        grad_out: &Tensor<E>,
        need_input_grad: bool,
    ) -> Option<Tensor<E>> {
        let (n, h, w, ci) = x.dim4();
        let (gn, gh, gw, gc) = grad_out.dim4();
        assert_eq!((gn, gh, gw), (n, h, w), "conv grad spatial mismatch");
        assert_eq!(gc, self.out_channels(), "conv grad channel mismatch");
        let co = self.out_channels();
        let (kh, kw) = self.kernel();
        let (ph, pw) = ((kh - 1) / 2, (kw - 1) / 2);
        let w_k = kh * kw * ci;

        let xs = x.data();
        let gys = grad_out.data();
        let ws = self.weights.data();

        // Input gradient, parallel over batch items.
        let grad_x = need_input_grad.then(|| {
            let mut grad_x = Tensor::zeros(&[n, h, w, ci]);
            grad_x
                .data_mut()
                .par_chunks_mut(h * w * ci)
                .enumerate()
                .for_each(|(ni, gx)| {
                    for oy in 0..h {
                        let ky_lo = ph.saturating_sub(oy);
                        let ky_hi = kh.min(h + ph - oy);
                        for ox in 0..w {
                            let kx_lo = pw.saturating_sub(ox);
                            let kx_hi = kw.min(w + pw - ox);
                            let g_cell = &gys[((ni * h + oy) * w + ox) * co..][..co];
                            for (c, &g) in g_cell.iter().enumerate() {
                                if g == E::zero() {
                                    continue;
                                }
                                let w_base = c * w_k;
                                for ky in ky_lo..ky_hi {
                                    let iy = oy + ky - ph;
                                    for kx in kx_lo..kx_hi {
                                        let ix = ox + kx - pw;
                                        let xo = (iy * w + ix) * ci;
                                        let wo = w_base + (ky * kw + kx) * ci;
                                        for c_in in 0..ci {
                                            gx[xo + c_in] = gx[xo + c_in] + g * ws[wo + c_in];
                                        }
                                    }
                                }
                            }
                        }
                    }
                });
            grad_x
        });

        // Weight gradient, parallel over output channels; batch items are
        // reduced sequentially inside each channel, in index order.
        let mut dw = vec![E::zero(); self.weights.len()];
        dw.par_chunks_mut(w_k).enumerate().for_each(|(c, dwc)| {
            for ni in 0..n {
                for oy in 0..h {
                    let ky_lo = ph.saturating_sub(oy);
                    let ky_hi = kh.min(h + ph - oy);
                    for ox in 0..w {
                        let g = gys[((ni * h + oy) * w + ox) * co + c];
                        if g == E::zero() {
                            continue;
                        }
                        let kx_lo = pw.saturating_sub(ox);
                        let kx_hi = kw.min(w + pw - ox);
                        for ky in ky_lo..ky_hi {
                            let iy = oy + ky - ph;
                            for kx in kx_lo..kx_hi {
                                let ix = ox + kx - pw;
                                let xo = ((ni * h + iy) * w + ix) * ci;
                                let wo = (ky * kw + kx) * ci;
                                for c_in in 0..ci {
                                    dwc[wo + c_in] = dwc[wo + c_in] + g * xs[xo + c_in];
                                }
                            }
                        }
                    }
                }
            }
        });
        for (acc, d) in self.weights.grad_mut().iter_mut().zip(&dw) {
            *acc = *acc + *d;
        }

        let db = self.bias.grad_mut();
        for cell in gys.chunks_exact(co) {
            for (acc, &g) in db.iter_mut().zip(cell) {
                *acc = *acc + g;
            }
        }

        grad_x
    }
}
