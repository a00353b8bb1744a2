//! Central finite-difference oracle for gradient checks.
//!
//! Used by test suites to validate reverse-mode results. It relies only on
//! repeated forward evaluations, never on `Graph::backward`.

use super::tensor::Tensor;

/// Central-difference gradient of `f` with respect to every entry of every
/// tensor in `params`, at the given step size.
pub fn central_diff(
    f: impl Fn(&[Tensor]) -> f64,
    params: &[Tensor],
    step: f64,
) -> Vec<Tensor> {
    let mut out = Vec::with_capacity(params.len());
    for pi in 0..params.len() {
        let (rows, cols) = params[pi].shape();
        let mut grad = Tensor::zeros(rows, cols);
        for k in 0..rows * cols {
            let mut plus = params.to_vec();
            let mut minus = params.to_vec();
            plus[pi].data_mut()[k] += step;
            minus[pi].data_mut()[k] -= step;
            grad.data_mut()[k] = (f(&plus) - f(&minus)) / (2.0 * step);
        }
        out.push(grad);
    }
    out
}

/// Largest per-entry relative error between an analytic and a numeric
/// gradient, with the denominator floored at 1 so near-zero entries are
/// compared absolutely.
pub fn max_rel_error(analytic: &Tensor, numeric: &Tensor) -> f64 {
    assert_eq!(analytic.shape(), numeric.shape(), "gradient shape mismatch");
    analytic
        .data()
        .iter()
        .zip(numeric.data())
        .map(|(a, n)| (a - n).abs() / n.abs().max(1.0))
        .fold(0.0, f64::max)
}

/// Max relative error across a list of parameter gradients.
pub fn max_rel_error_all(analytic: &[Tensor], numeric: &[Tensor]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| max_rel_error(a, n))
        .fold(0.0, f64::max)
}

/// Nudges entries away from a nondifferentiable point at zero so central
/// differences with `step` stay on one side of the kink.
pub fn nudge_from_zero(t: &mut Tensor, margin: f64) {
    for v in t.data_mut() {
        if v.abs() < margin {
            *v = if *v >= 0.0 { margin } else { -margin };
        }
    }
}
