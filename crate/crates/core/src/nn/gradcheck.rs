//! Central finite-difference gradient checking.

/// Compare `analytic` against central differences of `f` around `x`.
///
/// Returns the largest `|analytic − numeric| / max(1, |numeric|)` over all
/// coordinates.
pub fn grad_check<F>(f: F, x: &[f64], analytic: &[f64], eps: f64) -> f64
where
    F: FnMut(&[f64]) -> f64,
{
    let all: Vec<usize> = (0..x.len()).collect();
    grad_check_at(f, x, analytic, &all, eps)
}

/// [`grad_check`] restricted to the listed coordinates.
pub fn grad_check_at<F>(mut f: F, x: &[f64], analytic: &[f64], coords: &[usize], eps: f64) -> f64
where
    F: FnMut(&[f64]) -> f64,
{
    assert_eq!(x.len(), analytic.len(), "gradient length differs from input");
    let mut probe = x.to_vec();
    let mut worst = 0.0f64;
    for &i in coords {
        let orig = probe[i];
        probe[i] = orig + eps;
        let up = f(&probe);
        probe[i] = orig - eps;
        let down = f(&probe);
        probe[i] = orig;
        let numeric = (up - down) / (2.0 * eps);
        let err = (analytic[i] - numeric).abs() / numeric.abs().max(1.0);
        worst = worst.max(err);
    }
    worst
}
