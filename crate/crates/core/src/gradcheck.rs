//! Finite-difference gradient verification.
//!
//! The backward passes in this crate are all hand-derived, so each one is
//! validated against a central-difference approximation of the same scalar
//! objective. The objective used throughout is a random linear probe of the
//! output, `phi = sum(y * r)` for a fixed random `r`, whose gradient with
//! respect to the output is exactly `r`.

/// Central finite difference of `f` with respect to each coordinate of
/// `theta`, using step `h`.
///
/// `f` is called `2 * theta.len()` times on perturbed copies; it must be a
/// pure function of its argument.
pub fn central_diff(f: &mut dyn FnMut(&[f64]) -> f64, theta: &[f64], h: f64) -> Vec<f64> {
    let mut grad = Vec::with_capacity(theta.len());
    let mut work = theta.to_vec();
    for i in 0..theta.len() {
        let orig = work[i];
        work[i] = orig + h;
        let up = f(&work);
        work[i] = orig - h;
        let down = f(&work);
        work[i] = orig;
        grad.push((up - down) / (2.0 * h));
    }
    grad
}

/// Relative error between an analytic and a numeric derivative.
///
/// Central differences at `h = 1e-5` on `f64` carry cancellation noise of
/// roughly `eps * |f| / h` (around 1e-10 for unit-scale objectives), so a
/// disagreement below 1e-8 absolute is indistinguishable from exact
/// agreement — this matters for parameters whose true gradient is zero, such
/// as a bias immediately followed by batch norm.
pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    let diff = (analytic - numeric).abs();
    if diff <= 1e-8 {
        return 0.0;
    }
    diff / analytic.abs().max(numeric.abs())
}

/// Largest relative error over two gradient vectors of equal length.
///
/// Panics if the lengths differ, since that is always a harness bug.
pub fn max_rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len(), "gradient length mismatch");
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| rel_err(a, n))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_gradient() {
        // f(x) = sum(x_i^2), df/dx_i = 2 x_i
        let theta = [1.0, -2.0, 0.5];
        let mut f = |t: &[f64]| t.iter().map(|x| x * x).sum::<f64>();
        let num = central_diff(&mut f, &theta, 1e-5);
        let ana: Vec<f64> = theta.iter().map(|x| 2.0 * x).collect();
        assert!(max_rel_err(&ana, &num) < 1e-9);
    }

    #[test]
    fn product_gradient() {
        // f(x) = x0 * x1 * x2
        let theta = [2.0, 3.0, 5.0];
        let mut f = |t: &[f64]| t[0] * t[1] * t[2];
        let num = central_diff(&mut f, &theta, 1e-5);
        let ana = [15.0, 10.0, 6.0];
        assert!(max_rel_err(&ana, &num) < 1e-9);
    }

    #[test]
    fn rel_err_guards_small_denominators() {
        assert_eq!(rel_err(0.0, 0.0), 0.0);
        assert!(rel_err(1e-12, -1e-12) < 1.0);
    }

    #[test]
    fn detects_a_wrong_gradient() {
        // Negative control: a deliberately corrupted analytic gradient must
        // be flagged, otherwise the checker itself is vacuous.
        let theta = [1.5, -0.5];
        let mut f = |t: &[f64]| t[0] * t[0] + t[1];
        let num = central_diff(&mut f, &theta, 1e-5);
        let wrong = [2.0 * theta[0] * 1.01, 1.0];
        assert!(max_rel_err(&wrong, &num) > 1e-3);
    }
}
