use super::Tensor;

/// Denominator floor for [`relative_error`]; below it the comparison is
/// effectively absolute, so near-zero gradients don't blow up the ratio.
pub const RELATIVE_ERROR_FLOOR: f64 = 1e-3;

/// Central differences `(f(x + eps·eᵢ) − f(x − eps·eᵢ)) / 2eps` per element.
pub fn finite_diff_grad(mut f: impl FnMut(&Tensor) -> f64, x: &Tensor, eps: f64) -> Tensor {
    assert!(eps > 0.0, "finite difference step must be positive");
    let mut probe = x.clone();
    let mut out = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let orig = x.data()[i];
        probe.data_mut()[i] = orig + eps;
        let plus = f(&probe);
        probe.data_mut()[i] = orig - eps;
        let minus = f(&probe);
        probe.data_mut()[i] = orig;
        out.push((plus - minus) / (2.0 * eps));
    }
    Tensor::from_parts(x.shape().to_vec(), out)
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(RELATIVE_ERROR_FLOOR);
    (analytic - numeric).abs() / denom
}

pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| relative_error(a, n))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_gives_ones() {
        let x = Tensor::new(&[2, 2], vec![0.1, -3.0, 7.0, 2.5]).unwrap();
        let g = finite_diff_grad(|t| t.sum(), &x, 1e-4);
        g.data().iter().for_each(|v| assert!((v - 1.0).abs() < 1e-9));
    }

    #[test]
    fn quadratic_is_exact() {
        let x = Tensor::scalar(3.0).unwrap();
        let g = finite_diff_grad(|t| t.data()[0].powi(2), &x, 1e-4);
        assert!((g.data()[0] - 6.0).abs() < 1e-6);
    }

    #[test]
    fn relative_error_floor() {
        assert_eq!(relative_error(2.0, 1.0), 0.5);
        assert!(relative_error(1e-9, 0.0) < 1e-5);
    }
}
