//! Differentiable tensor operations.
//!
//! Each op eagerly computes its forward value and records a closure that maps
//! the upstream gradient onto its parents. Shape errors panic with both
//! shapes in the message; numeric edge cases are documented per op.

mod conv;
mod elementwise;
mod linalg;
mod nn;
mod reduce;
mod shape;

use crate::Tensor;

pub(crate) fn assert_same_shape(op: &str, a: &Tensor, b: &Tensor) {
    assert!(
        a.shape() == b.shape(),
        "{op}: shape mismatch {:?} vs {:?}",
        a.shape(),
        b.shape()
    );
}

/// Splits a shape around `axis` into (outer, len, inner) extents so lanes
/// along `axis` can be walked with two nested loops.
pub(crate) fn lane_extents(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    assert!(
        axis < shape.len(),
        "axis {axis} out of range for shape {shape:?}"
    );
    let outer: usize = shape[..axis].iter().product();
    let len = shape[axis];
    let inner: usize = shape[axis + 1..].iter().product();
    (outer, len, inner)
}
