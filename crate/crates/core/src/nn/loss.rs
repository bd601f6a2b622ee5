//! Softmax cross-entropy with max-subtraction for stability.

use super::tensor::{e, Element, Tensor};
use super::NnError;

/// Row-wise softmax of `(batch, classes)` logits and the mean negative
/// log-likelihood of the true classes. Returns `(loss, probs)`.
pub fn softmax_crossentropy<E: Element>(
    logits: &Tensor<E>,
    labels: &[usize],
) -> Result<(E, Tensor<E>), NnError> {
    assert_eq!(logits.rank(), 2, "logits must be (batch, classes)");
    let (n, classes) = (logits.dims()[0], logits.dims()[1]);
    assert_eq!(labels.len(), n, "one label per batch row");
    if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
        return Err(NnError::LabelOutOfRange {
            label: bad,
            classes,
        });
    }

    let mut probs = Tensor::zeros(&[n, classes]);
    let mut loss = E::zero();
    for ((row, out), &label) in logits
        .data()
        .chunks_exact(classes)
        .zip(probs.data_mut().chunks_exact_mut(classes))
        .zip(labels)
    {
        let max = row.iter().cloned().fold(E::neg_infinity(), E::max);
        let mut denom = E::zero();
        for (o, &v) in out.iter_mut().zip(row) {
            let ex = (v - max).exp();
            *o = ex;
            denom = denom + ex;
        }
        for o in out.iter_mut() {
            *o = *o / denom;
        }
        loss = loss - out[label].ln();
    }
    Ok((loss / e(n as f64), probs))
}

/// Gradient of the mean cross-entropy with respect to the logits:
/// `(probs - onehot) / batch`.
pub fn softmax_crossentropy_backward<E: Element>(
    probs: &Tensor<E>,
    labels: &[usize],
) -> Tensor<E> {
    let (n, classes) = (probs.dims()[0], probs.dims()[1]);
    let inv_n = E::one() / e::<E>(n as f64);
    let mut grad = probs.clone();
    for (row, &label) in grad.data_mut().chunks_exact_mut(classes).zip(labels) {
        row[label] = row[label] - E::one();
        for g in row.iter_mut() {
            *g = *g * inv_n;
        }
    }
    grad
}
