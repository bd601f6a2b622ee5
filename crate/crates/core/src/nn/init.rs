//! Weight initialization.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::tensor::{Element, Tensor};

/// Kaiming-uniform fill: `U(-b, b)` with `b = sqrt(6 / fan_in)`, the ReLU
/// gain folded in. Sampling happens in f64 so a seed fixes the draw order
/// regardless of the element type.
pub fn kaiming_uniform<E: Element>(tensor: &mut Tensor<E>, fan_in: usize, rng: &mut ChaCha8Rng) {
    assert!(fan_in > 0);
    let bound = (6.0 / fan_in as f64).sqrt();
    for v in tensor.data_mut() {
        *v = E::from_f64(rng.gen_range(-bound..bound));
    }
}
