//! Central finite-difference oracle for gradient verification.
//!
//! These helpers only ever evaluate the objective forward, so they stay
//! independent of the backward pass they are used to check.

use crate::autograd::tensor::Tensor;

/// Relative error between an analytic and a numeric derivative.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / (a.abs() + b.abs()).max(1e-8)
}

/// Numeric gradient of `f` with respect to every scalar in `tensors`,
/// via central differences `(f(x+eps) - f(x-eps)) / (2 eps)`.
///
/// `f` must be a deterministic function of the tensor values. The tensors are
/// perturbed in place and restored before returning.
pub fn finite_diff_grads<F>(tensors: &mut [Tensor], eps: f64, mut f: F) -> Vec<Vec<f64>>
where
    F: FnMut(&[Tensor]) -> f64,
{
    let mut grads = Vec::with_capacity(tensors.len());
    for ti in 0..tensors.len() {
        let n = tensors[ti].numel();
        let mut g = vec![0.0; n];
        for j in 0..n {
            let orig = tensors[ti].values()[j];
            tensors[ti].values_mut()[j] = orig + eps;
            let up = f(tensors);
            tensors[ti].values_mut()[j] = orig - eps;
            let down = f(tensors);
            tensors[ti].values_mut()[j] = orig;
            g[j] = (up - down) / (2.0 * eps);
        }
        grads.push(g);
    }
    grads
}

/// Maximum relative error between analytic gradients and the central-difference
/// oracle, across every scalar of every tensor.
pub fn finite_diff_check<F>(
    tensors: &mut [Tensor],
    analytic: &[Vec<f64>],
    eps: f64,
    f: F,
) -> f64
where
    F: FnMut(&[Tensor]) -> f64,
{
    let numeric = finite_diff_grads(tensors, eps, f);
    max_rel_err(analytic, &numeric)
}

pub fn max_rel_err(analytic: &[Vec<f64>], numeric: &[Vec<f64>]) -> f64 {
    let mut worst = 0.0f64;
    for (a, n) in analytic.iter().zip(numeric) {
        assert_eq!(a.len(), n.len(), "gradient buffers must align");
        for (&x, &y) in a.iter().zip(n) {
            worst = worst.max(rel_err(x, y));
        }
    }
    worst
}
