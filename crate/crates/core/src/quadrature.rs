//! Gauss-Legendre and Gauss-Hermite rules (Golub-Welsch, Newton-polished).

use alloc::vec::Vec;
#[allow(unused_imports)] // inherent float methods shadow these when std is linked
use num_traits::Float as _;
use nalgebra::DMatrix;

/// Evaluates the orthonormal polynomials `p_0..p_n` of a symmetric
/// three-term recurrence `x p_k = b_{k+1} p_{k+1} + b_k p_{k-1}` and the
/// derivative of `p_n`.
fn orthonormal_eval(x: f64, n: usize, p0: f64, b: &dyn Fn(usize) -> f64) -> (f64, f64, f64) {
    // returns (p_n, p_n', sum_{k<n} p_k^2)
    let mut pm1 = 0.0;
    let mut dpm1 = 0.0;
    let mut p = p0;
    let mut dp = 0.0;
    let mut sum = 0.0;
    for k in 0..n {
        sum += p * p;
        let bk = if k == 0 { 0.0 } else { b(k) };
        let bk1 = b(k + 1);
        let next = (x * p - bk * pm1) / bk1;
        let dnext = (p + x * dp - bk * dpm1) / bk1;
        pm1 = p;
        dpm1 = dp;
        p = next;
        dp = dnext;
    }
    (p, dp, sum)
}

fn golub_welsch(n: usize, p0: f64, b: &dyn Fn(usize) -> f64) -> (Vec<f64>, Vec<f64>) {
    let mut jm = DMatrix::zeros(n, n);
    for k in 1..n {
        jm[(k - 1, k)] = b(k);
        jm[(k, k - 1)] = b(k);
    }
    let mut nodes: Vec<f64> = jm.symmetric_eigenvalues().iter().cloned().collect();
    nodes.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut weights = Vec::with_capacity(n);
    for x in nodes.iter_mut() {
        for _ in 0..3 {
            let (p, dp, _) = orthonormal_eval(*x, n, p0, b);
            if dp != 0.0 {
                *x -= p / dp;
            }
        }
        let (_, _, sum) = orthonormal_eval(*x, n, p0, b);
        weights.push(1.0 / sum);
    }
    (nodes, weights)
}

/// Nodes and weights on `[-1, 1]` for `int f(x) dx`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    // orthonormal for the probability measure dx / 2
    let b = |k: usize| {
        let k = k as f64;
        k / (4.0 * k * k - 1.0).sqrt()
    };
    let (x, w) = golub_welsch(n, 1.0, &b);
    (x, w.into_iter().map(|w| 2.0 * w).collect())
}

/// Nodes and weights with `sum w_i f(x_i) ~ E f(N(0, 1))`.
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    let b = |k: usize| (k as f64).sqrt();
    golub_welsch(n, 1.0, &b)
}
