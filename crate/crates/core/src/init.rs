//! Seeded weight initialization.

use rand::Rng;

use crate::Tensor;

/// Trainable tensor with entries from `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
pub fn fan_in_uniform<R: Rng>(shape: &[usize], fan_in: usize, rng: &mut R) -> Tensor {
    assert!(fan_in > 0, "fan_in_uniform: fan_in must be positive");
    let bound = 1.0 / (fan_in as f64).sqrt();
    Tensor::uniform_param(shape, -bound, bound, rng)
}

/// Weight and bias for an `in_dim -> out_dim` affine layer.
pub fn linear_init<R: Rng>(in_dim: usize, out_dim: usize, rng: &mut R) -> (Tensor, Tensor) {
    let w = fan_in_uniform(&[in_dim, out_dim], in_dim, rng);
    let b = fan_in_uniform(&[out_dim], in_dim, rng);
    (w, b)
}

/// Gain-one, bias-zero affine pair for layer normalization.
pub fn layer_norm_init(dim: usize) -> (Tensor, Tensor) {
    (
        Tensor::param(&[dim], vec![1.0; dim]),
        Tensor::param(&[dim], vec![0.0; dim]),
    )
}
