//! Finite-difference verification of reverse-mode gradients.
//!
//! For every element of every checked parameter the scalar loss is evaluated
//! at `x + h` and `x - h`; the central difference `(f(x+h) - f(x-h)) / 2h`
//! must agree with the accumulated analytic gradient. Keep losses smooth at
//! the evaluation point: a relu kink or a pooling tie within `h` of an input
//! makes the numeric estimate meaningless.

use crate::Tensor;

/// Central-difference step.
pub const DEFAULT_STEP: f64 = 1e-5;
/// Relative-error bound used across the gradient suites.
pub const DEFAULT_TOLERANCE: f64 = 1e-4;

/// Relative error with an absolute floor so near-zero gradients compare
/// sanely.
pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-3)
}

/// Worst disagreement found by [`check_gradients`].
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    /// Largest relative error across all checked elements.
    pub max_rel_err: f64,
    /// Index of the parameter holding the worst element.
    pub param: usize,
    /// Flat element index within that parameter.
    pub element: usize,
    pub analytic: f64,
    pub numeric: f64,
    /// Total number of elements compared.
    pub checked: usize,
}

impl GradCheckReport {
    pub fn within(&self, tol: f64) -> bool {
        self.max_rel_err < tol
    }
}

/// Compares analytic gradients of `loss_fn` against central differences for
/// every element of `params`. `loss_fn` must rebuild the graph from the
/// parameters' current data on each call and return a scalar.
pub fn check_gradients<F>(params: &[Tensor], loss_fn: F, h: f64) -> GradCheckReport
where
    F: Fn() -> Tensor,
{
    assert!(!params.is_empty(), "gradient check needs parameters");
    for p in params {
        p.zero_grad();
    }
    let loss = loss_fn();
    assert!(
        loss.len() == 1,
        "gradient check needs a scalar loss, got shape {:?}",
        loss.shape()
    );
    loss.backward();
    let analytic: Vec<Vec<f64>> = params
        .iter()
        .map(|p| p.grad().unwrap_or_else(|| vec![0.0; p.len()]))
        .collect();

    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        param: 0,
        element: 0,
        analytic: 0.0,
        numeric: 0.0,
        checked: 0,
    };
    for (pi, p) in params.iter().enumerate() {
        for ei in 0..p.len() {
            let orig = p.data()[ei];
            p.data_mut()[ei] = orig + h;
            let up = loss_fn().value();
            p.data_mut()[ei] = orig - h;
            let down = loss_fn().value();
            p.data_mut()[ei] = orig;
            let numeric = (up - down) / (2.0 * h);
            let err = rel_err(analytic[pi][ei], numeric);
            report.checked += 1;
            if err > report.max_rel_err {
                report.max_rel_err = err;
                report.param = pi;
                report.element = ei;
                report.analytic = analytic[pi][ei];
                report.numeric = numeric;
            }
        }
    }
    for p in params {
        p.zero_grad();
    }
    report
}
