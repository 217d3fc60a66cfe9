use crate::nnkit::tensor::Tensor;

/// Largest relative disagreement between `analytic` and central differences
/// of `f` around `params`:
/// `max |analytic − fd| / max(1, |fd|)` over every scalar parameter.
pub fn finite_diff_check<F>(f: F, params: &[Tensor<f64>], analytic: &[Tensor<f64>], eps: f64) -> f64
where
    F: Fn(&[Tensor<f64>]) -> f64,
{
    assert!(eps > 0.0, "finite-difference step must be positive");
    assert_eq!(params.len(), analytic.len(), "one analytic gradient per parameter tensor");
    let mut work: Vec<Tensor<f64>> = params.to_vec();
    let mut worst = 0.0f64;
    for t in 0..params.len() {
        assert_eq!(params[t].shape(), analytic[t].shape(), "gradient shape mismatch for tensor {t}");
        for i in 0..params[t].len() {
            let orig = params[t].values()[i];
            work[t].values_mut()[i] = orig + eps;
            let up = f(&work);
            work[t].values_mut()[i] = orig - eps;
            let down = f(&work);
            work[t].values_mut()[i] = orig;
            let fd = (up - down) / (2.0 * eps);
            let err = (analytic[t].values()[i] - fd).abs() / fd.abs().max(1.0);
            worst = worst.max(err);
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    fn linear(p: &[Tensor<f64>]) -> f64 {
        p[0].values().iter().enumerate().map(|(i, v)| (i as f64 + 1.0) * v).sum()
    }

    #[test]
    fn exact_for_linear_functions() {
        let p = vec![Tensor::vector(vec![0.3, -1.2, 4.0])];
        let g = vec![Tensor::vector(vec![1.0, 2.0, 3.0])];
        assert!(finite_diff_check(linear, &p, &g, 1e-6) < 1e-9);
    }

    #[test]
    fn detects_corrupted_gradient() {
        let p = vec![Tensor::vector(vec![0.3, -1.2, 4.0])];
        let g = vec![Tensor::vector(vec![1.0, 2.5, 3.0])];
        assert!(finite_diff_check(linear, &p, &g, 1e-6) > 1e-2);
    }
}
