//! Pointwise and structural ops: ReLU and depth-wise concatenation.

use super::tensor::{Element, Tensor};
use super::NnError;

/// Entry-wise `max(0, x)`.
pub fn relu<E: Element>(x: &Tensor<E>) -> Tensor<E> {
    let mut out = x.clone();
    for v in out.data_mut() {
        if *v < E::zero() {
            *v = E::zero();
        }
    }
    out
}

/// Gradient of ReLU given the forward *output*: passes where the output is
/// positive, exactly zero elsewhere (dead units stay dead).
pub fn relu_backward<E: Element>(output: &Tensor<E>, grad_out: &Tensor<E>) -> Tensor<E> {
    assert_eq!(output.dims(), grad_out.dims());
    let mut grad_x = grad_out.clone();
    for (g, &y) in grad_x.data_mut().iter_mut().zip(output.data()) {
        if y <= E::zero() {
            *g = E::zero();
        }
    }
    grad_x
}

/// Concatenate along the channel axis. All parts must share batch and
/// spatial dims; channel order follows the argument order.
pub fn depth_concat<E: Element>(parts: &[&Tensor<E>]) -> Result<Tensor<E>, NnError> {
    assert!(!parts.is_empty(), "depth_concat of nothing");
    let (n, h, w, _) = parts[0].dim4();
    let mut total_c = 0;
    for p in parts {
        let (pn, ph, pw, pc) = p.dim4();
        if (pn, ph, pw) != (n, h, w) {
            return Err(NnError::SpatialMismatch(format!(
                "part is ({pn}, {ph}, {pw}, _), expected ({n}, {h}, {w}, _)"
            )));
        }
        total_c += pc;
    }
    let mut out = Tensor::zeros(&[n, h, w, total_c]);
    let cells = n * h * w;
    let out_data = out.data_mut();
    let mut offset = 0;
    for p in parts {
        let pc = p.dims()[3];
        for cell in 0..cells {
            let dst = cell * total_c + offset;
            let src = cell * pc;
            out_data[dst..dst + pc].copy_from_slice(&p.data()[src..src + pc]);
        }
        offset += pc;
    }
    Ok(out)
}

/// Split a concatenated gradient back into per-part gradients.
pub fn depth_concat_backward<E: Element>(
    grad_out: &Tensor<E>,
    part_channels: &[usize],
) -> Vec<Tensor<E>> {
    let (n, h, w, c) = grad_out.dim4();
    assert_eq!(part_channels.iter().sum::<usize>(), c, "channel split mismatch");
    let cells = n * h * w;
    let mut outs = Vec::with_capacity(part_channels.len());
    let mut offset = 0;
    for &pc in part_channels {
        let mut g = Tensor::zeros(&[n, h, w, pc]);
        let gd = g.data_mut();
        for cell in 0..cells {
            let src = cell * c + offset;
            gd[cell * pc..(cell + 1) * pc].copy_from_slice(&grad_out.data()[src..src + pc]);
        }
        outs.push(g);
        offset += pc;
    }
    outs
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relu_clamps_negatives() {
        let x = Tensor::from_vec(&[3], vec![-1.0, 0.0, 2.0]);
        assert_eq!(relu(&x).data(), &[0.0, 0.0, 2.0]);
    }

    #[test]
    fn relu_of_all_negative_is_zero() {
        let x = Tensor::from_vec(&[4], vec![-1.0, -0.5, -2.0, -1e-9]);
        assert!(relu(&x).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn relu_is_idempotent() {
        let x = Tensor::from_vec(&[5], vec![-2.0, -0.1, 0.0, 0.1, 3.0]);
        let once = relu(&x);
        assert_eq!(relu(&once), once);
    }

    #[test]
    fn relu_backward_blocks_dead_units() {
        let x = Tensor::from_vec(&[4], vec![-1.0, 2.0, 0.0, 0.5]);
        let y = relu(&x);
        let gy = Tensor::from_vec(&[4], vec![1.0, 1.0, 1.0, 1.0]);
        assert_eq!(relu_backward(&y, &gy).data(), &[0.0, 1.0, 0.0, 1.0]);
    }

    #[test]
    fn concat_sums_channels_in_order() {
        let a = Tensor::from_vec(&[1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]);
        let b = Tensor::from_vec(&[1, 1, 2, 1], vec![9.0, 8.0]);
        let y = depth_concat(&[&a, &b]).unwrap();
        assert_eq!(y.dims(), &[1, 1, 2, 3]);
        assert_eq!(y.data(), &[1.0, 2.0, 9.0, 3.0, 4.0, 8.0]);
    }

    #[test]
    fn paper_channel_budgets() {
        let h_parts: Vec<Tensor<f32>> = [16, 16, 16, 16, 8, 8, 8, 8, 8, 8]
            .iter()
            .map(|&c| Tensor::zeros(&[1, 2, 3, c]))
            .collect();
        let refs: Vec<&Tensor<f32>> = h_parts.iter().collect();
        assert_eq!(depth_concat(&refs).unwrap().dims()[3], 112);

        let p_parts: Vec<Tensor<f32>> = [32, 32, 32, 16, 16, 16, 16, 16, 16, 16]
            .iter()
            .map(|&c| Tensor::zeros(&[1, 2, 3, c]))
            .collect();
        let refs: Vec<&Tensor<f32>> = p_parts.iter().collect();
        assert_eq!(depth_concat(&refs).unwrap().dims()[3], 208);
    }

    #[test]
    fn single_part_is_identity() {
        let a = Tensor::from_vec(&[1, 2, 1, 2], vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(depth_concat(&[&a]).unwrap(), a);
    }

    #[test]
    fn spatial_mismatch_is_an_error() {
        let a = Tensor::<f32>::zeros(&[1, 2, 2, 1]);
        let b = Tensor::<f32>::zeros(&[1, 2, 3, 1]);
        assert!(matches!(
            depth_concat(&[&a, &b]),
            Err(NnError::SpatialMismatch(_))
        ));
    }

    #[test]
    fn concat_backward_splits_exactly() {
        let a = Tensor::from_vec(&[1, 1, 1, 2], vec![1.0, 2.0]);
        let b = Tensor::from_vec(&[1, 1, 1, 3], vec![3.0, 4.0, 5.0]);
        let y = depth_concat(&[&a, &b]).unwrap();
        let parts = depth_concat_backward(&y, &[2, 3]);
        assert_eq!(parts[0].data(), a.data());
        assert_eq!(parts[1].data(), b.data());
    }
}
