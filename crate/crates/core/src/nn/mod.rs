//! Tensors, layers, exact reverse-mode gradients, and Adam.
//!
//! Layers expose explicit `forward`/`backward` pairs rather than a dynamic
//! autograd graph; the model composes them and keeps the per-layer caches
//! itself. Every backward implementation is held to central
//! finite-difference checks in f64.

mod adam;
mod batchnorm;
mod conv;
mod init;
mod linear;
mod loss;
mod ops;
mod pool;
mod tensor;

pub use adam::AdamState;
pub use batchnorm::{BatchNorm, BnCache};
pub use conv::Conv2d;
pub use init::kaiming_uniform;
pub use linear::Linear;
pub use loss::{softmax_crossentropy, softmax_crossentropy_backward};
pub use ops::{depth_concat, depth_concat_backward, relu, relu_backward};
pub use pool::{
    global_max_pool, global_max_pool_backward, maxpool, maxpool_backward, MaxPoolCache, PoolSpec,
};
pub use tensor::{axpy, dot, e, Element, Tensor};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("input has {got} channels, layer expects {want}")]
    ChannelMismatch { got: usize, want: usize },
    #[error("spatial dims mismatch: {0}")]
    SpatialMismatch(String),
    #[error("{what}: got {got}, want {want}")]
    DimMismatch {
        what: &'static str,
        got: usize,
        want: usize,
    },
    #[error("pool window {pool:?} larger than input {input:?}")]
    WindowTooLarge {
        input: (usize, usize),
        pool: (usize, usize),
    },
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
}

#[cfg(test)]
mod gradcheck {
    //! Central finite-difference checks for every layer type, f64, h = 1e-3,
    //! relative tolerance 1e-4.

    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const H: f64 = 1e-3;
    const RTOL: f64 = 1e-4;
    const ATOL: f64 = 1e-8;

    fn assert_close(analytic: f64, fd: f64, what: &str) {
        let err = (analytic - fd).abs();
        let scale = analytic.abs().max(fd.abs());
        assert!(
            err <= ATOL + RTOL * scale,
            "{what}: analytic {analytic} vs fd {fd} (err {err})"
        );
    }

    fn random_tensor(rng: &mut ChaCha8Rng, dims: &[usize]) -> Tensor<f64> {
        Tensor::from_vec(
            dims,
            (0..dims.iter().product())
                .map(|_| rng.gen_range(-1.0..1.0))
                .collect(),
        )
    }

    /// Weighted-sum loss so every output entry participates.
    fn loss_of(y: &Tensor<f64>, coeffs: &[f64]) -> f64 {
        y.data().iter().zip(coeffs).map(|(a, b)| a * b).sum()
    }

    #[test]
    fn conv2d_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(101);
        let mut layer = Conv2d::<f64>::new(3, 2, 3, 2);
        for v in layer.weights.data_mut() {
            *v = rng.gen_range(-1.0..1.0);
        }
        for v in layer.bias.data_mut() {
            *v = rng.gen_range(-1.0..1.0);
        }
        let x = random_tensor(&mut rng, &[2, 4, 5, 2]);
        let y = layer.forward(&x).unwrap();
        let coeffs: Vec<f64> = (0..y.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();

        let gy = Tensor::from_vec(y.dims(), coeffs.clone());
        let gx = layer.backward(&x, &gy, true).unwrap();

        for i in 0..x.len() {
            let mut lo = x.clone();
            let mut hi = x.clone();
            lo.data_mut()[i] -= H;
            hi.data_mut()[i] += H;
            let fd = (loss_of(&layer.forward(&hi).unwrap(), &coeffs)
                - loss_of(&layer.forward(&lo).unwrap(), &coeffs))
                / (2.0 * H);
            assert_close(gx.data()[i], fd, &format!("conv input {i}"));
        }
        for i in 0..layer.weights.len() {
            let mut lo = layer.clone();
            let mut hi = layer.clone();
            lo.weights.data_mut()[i] -= H;
            hi.weights.data_mut()[i] += H;
            let fd = (loss_of(&hi.forward(&x).unwrap(), &coeffs)
                - loss_of(&lo.forward(&x).unwrap(), &coeffs))
                / (2.0 * H);
            assert_close(layer.weights.grad()[i], fd, &format!("conv weight {i}"));
        }
        for i in 0..layer.bias.len() {
            let mut lo = layer.clone();
            let mut hi = layer.clone();
            lo.bias.data_mut()[i] -= H;
            hi.bias.data_mut()[i] += H;
            let fd = (loss_of(&hi.forward(&x).unwrap(), &coeffs)
                - loss_of(&lo.forward(&x).unwrap(), &coeffs))
                / (2.0 * H);
            assert_close(layer.bias.grad()[i], fd, &format!("conv bias {i}"));
        }
    }

    #[test]
    fn batchnorm_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(102);
        let mut layer = BatchNorm::<f64>::new(3);
        for v in layer.gamma.data_mut() {
            *v = rng.gen_range(0.5..1.5);
        }
        for v in layer.beta.data_mut() {
            *v = rng.gen_range(-0.5..0.5);
        }
        let x = random_tensor(&mut rng, &[2, 3, 2, 3]);
        let (y, cache) = layer.clone().forward_train(&x);
        let coeffs: Vec<f64> = (0..y.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();

        let gy = Tensor::from_vec(y.dims(), coeffs.clone());
        let mut layer_for_grads = layer.clone();
        let gx = layer_for_grads.backward(&cache, &gy);

        let eval = |l: &BatchNorm<f64>, input: &Tensor<f64>| {
            loss_of(&l.clone().forward_train(input).0, &coeffs)
        };

        for i in 0..x.len() {
            let mut lo = x.clone();
            let mut hi = x.clone();
            lo.data_mut()[i] -= H;
            hi.data_mut()[i] += H;
            let fd = (eval(&layer, &hi) - eval(&layer, &lo)) / (2.0 * H);
            assert_close(gx.data()[i], fd, &format!("bn input {i}"));
        }
        for i in 0..3 {
            let mut lo = layer.clone();
            let mut hi = layer.clone();
            lo.gamma.data_mut()[i] -= H;
            hi.gamma.data_mut()[i] += H;
            let fd = (eval(&hi, &x) - eval(&lo, &x)) / (2.0 * H);
            assert_close(layer_for_grads.gamma.grad()[i], fd, &format!("bn gamma {i}"));

            let mut lo = layer.clone();
            let mut hi = layer.clone();
            lo.beta.data_mut()[i] -= H;
            hi.beta.data_mut()[i] += H;
            let fd = (eval(&hi, &x) - eval(&lo, &x)) / (2.0 * H);
            assert_close(layer_for_grads.beta.grad()[i], fd, &format!("bn beta {i}"));
        }
    }

    #[test]
    fn relu_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(103);
        // Keep every input away from the kink at 0 by more than H.
        let x = Tensor::from_vec(
            &[2, 2, 2, 2],
            (0..16)
                .map(|_| {
                    let v: f64 = rng.gen_range(0.01..1.0);
                    if rng.gen_bool(0.5) {
                        v
                    } else {
                        -v
                    }
                })
                .collect(),
        );
        let y = relu(&x);
        let coeffs: Vec<f64> = (0..16).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let gy = Tensor::from_vec(y.dims(), coeffs.clone());
        let gx = relu_backward(&y, &gy);
        for i in 0..x.len() {
            let mut lo = x.clone();
            let mut hi = x.clone();
            lo.data_mut()[i] -= H;
            hi.data_mut()[i] += H;
            let fd = (loss_of(&relu(&hi), &coeffs) - loss_of(&relu(&lo), &coeffs)) / (2.0 * H);
            assert_close(gx.data()[i], fd, &format!("relu input {i}"));
        }
        // Positive inputs under a sum loss see gradient one, dead units zero.
        let sum_gy = Tensor::from_vec(y.dims(), vec![1.0; 16]);
        let g = relu_backward(&y, &sum_gy);
        for (i, (&xi, &gi)) in x.data().iter().zip(g.data()).enumerate() {
            assert_eq!(gi, if xi > 0.0 { 1.0 } else { 0.0 }, "unit {i}");
        }
    }

    #[test]
    fn maxpool_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(104);
        let x = random_tensor(&mut rng, &[2, 4, 6, 3]);
        let spec = PoolSpec::with_stride_equal_pool(2, 3);
        let (y, cache) = maxpool(&x, &spec).unwrap();
        let coeffs: Vec<f64> = (0..y.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let gy = Tensor::from_vec(y.dims(), coeffs.clone());
        let gx = maxpool_backward(&cache, &gy);
        for i in 0..x.len() {
            let mut lo = x.clone();
            let mut hi = x.clone();
            lo.data_mut()[i] -= H;
            hi.data_mut()[i] += H;
            let fd = (loss_of(&maxpool(&hi, &spec).unwrap().0, &coeffs)
                - loss_of(&maxpool(&lo, &spec).unwrap().0, &coeffs))
                / (2.0 * H);
            assert_close(gx.data()[i], fd, &format!("maxpool input {i}"));
        }
    }

    #[test]
    fn global_max_pool_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(105);
        let x = random_tensor(&mut rng, &[2, 3, 4, 2]);
        let (y, cache) = global_max_pool(&x);
        let coeffs: Vec<f64> = (0..y.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let gy = Tensor::from_vec(y.dims(), coeffs.clone());
        let gx = global_max_pool_backward(&cache, &gy);
        for i in 0..x.len() {
            let mut lo = x.clone();
            let mut hi = x.clone();
            lo.data_mut()[i] -= H;
            hi.data_mut()[i] += H;
            let fd = (loss_of(&global_max_pool(&hi).0, &coeffs)
                - loss_of(&global_max_pool(&lo).0, &coeffs))
                / (2.0 * H);
            assert_close(gx.data()[i], fd, &format!("gmp input {i}"));
        }
    }

    #[test]
    fn linear_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(106);
        let mut layer = Linear::<f64>::new(5, 3);
        for v in layer.weights.data_mut() {
            *v = rng.gen_range(-1.0..1.0);
        }
        for v in layer.bias.data_mut() {
            *v = rng.gen_range(-1.0..1.0);
        }
        let x = random_tensor(&mut rng, &[2, 5]);
        let y = layer.forward(&x).unwrap();
        let coeffs: Vec<f64> = (0..y.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let gy = Tensor::from_vec(y.dims(), coeffs.clone());
        let gx = layer.backward(&x, &gy);

        for i in 0..x.len() {
            let mut lo = x.clone();
            let mut hi = x.clone();
            lo.data_mut()[i] -= H;
            hi.data_mut()[i] += H;
            let fd = (loss_of(&layer.forward(&hi).unwrap(), &coeffs)
                - loss_of(&layer.forward(&lo).unwrap(), &coeffs))
                / (2.0 * H);
            assert_close(gx.data()[i], fd, &format!("linear input {i}"));
        }
        for i in 0..layer.weights.len() {
            let mut lo = layer.clone();
            let mut hi = layer.clone();
            lo.weights.data_mut()[i] -= H;
            hi.weights.data_mut()[i] += H;
            let fd = (loss_of(&hi.forward(&x).unwrap(), &coeffs)
                - loss_of(&lo.forward(&x).unwrap(), &coeffs))
                / (2.0 * H);
            assert_close(layer.weights.grad()[i], fd, &format!("linear weight {i}"));
        }
        for i in 0..layer.bias.len() {
            let mut lo = layer.clone();
            let mut hi = layer.clone();
            lo.bias.data_mut()[i] -= H;
            hi.bias.data_mut()[i] += H;
            let fd = (loss_of(&hi.forward(&x).unwrap(), &coeffs)
                - loss_of(&lo.forward(&x).unwrap(), &coeffs))
                / (2.0 * H);
            assert_close(layer.bias.grad()[i], fd, &format!("linear bias {i}"));
        }
    }

    #[test]
    fn depth_concat_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(107);
        let a = random_tensor(&mut rng, &[1, 2, 2, 2]);
        let b = random_tensor(&mut rng, &[1, 2, 2, 3]);
        let y = depth_concat(&[&a, &b]).unwrap();
        let coeffs: Vec<f64> = (0..y.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let gy = Tensor::from_vec(y.dims(), coeffs.clone());
        let grads = depth_concat_backward(&gy, &[2, 3]);

        for (pi, part) in [&a, &b].iter().enumerate() {
            for i in 0..part.len() {
                let mut lo = (*part).clone();
                let mut hi = (*part).clone();
                lo.data_mut()[i] -= H;
                hi.data_mut()[i] += H;
                let (ylo, yhi) = if pi == 0 {
                    (
                        depth_concat(&[&lo, &b]).unwrap(),
                        depth_concat(&[&hi, &b]).unwrap(),
                    )
                } else {
                    (
                        depth_concat(&[&a, &lo]).unwrap(),
                        depth_concat(&[&a, &hi]).unwrap(),
                    )
                };
                let fd = (loss_of(&yhi, &coeffs) - loss_of(&ylo, &coeffs)) / (2.0 * H);
                assert_close(grads[pi].data()[i], fd, &format!("concat part {pi} [{i}]"));
            }
        }
    }

    #[test]
    fn softmax_crossentropy_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(108);
        let logits = random_tensor(&mut rng, &[3, 5]);
        let labels = [1usize, 4, 0];
        let (_, probs) = softmax_crossentropy(&logits, &labels).unwrap();
        let g = softmax_crossentropy_backward(&probs, &labels);
        for i in 0..logits.len() {
            let mut lo = logits.clone();
            let mut hi = logits.clone();
            lo.data_mut()[i] -= H;
            hi.data_mut()[i] += H;
            let (llo, _) = softmax_crossentropy(&lo, &labels).unwrap();
            let (lhi, _) = softmax_crossentropy(&hi, &labels).unwrap();
            assert_close(g.data()[i], (lhi - llo) / (2.0 * H), &format!("logit {i}"));
        }
    }
}
