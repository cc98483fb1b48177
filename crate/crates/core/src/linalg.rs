//! Small dense helpers on top of nalgebra.

#[allow(unused_imports)] // inherent float methods shadow these when std is linked
use num_traits::Float as _;
use nalgebra::{DMatrix, DVector};

/// Modified Gram-Schmidt on the columns, in place.
pub fn gram_schmidt(m: &mut DMatrix<f64>) {
    let (rows, k) = m.shape();
    for j in 0..k {
        for i in 0..j {
            let mut dot = 0.0;
            for r in 0..rows {
                dot += m[(r, i)] * m[(r, j)];
            }
            for r in 0..rows {
                let t = m[(r, i)];
                m[(r, j)] -= dot * t;
            }
        }
        let n = m.column(j).norm();
        if n > 0.0 {
            m.column_mut(j).scale_mut(1.0 / n);
        }
    }
}

/// max |M^T M - I| entrywise.
pub fn orthonormality_defect(m: &DMatrix<f64>) -> f64 {
    let g = m.transpose() * m;
    let mut worst: f64 = 0.0;
    for i in 0..g.nrows() {
        for j in 0..g.ncols() {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((g[(i, j)] - target).abs());
        }
    }
    worst
}

/// Spectral norm (largest singular value).
pub fn op_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    let g = m.transpose() * m;
    let eig = g.symmetric_eigenvalues();
    eig.iter().cloned().fold(0.0_f64, f64::max).max(0.0).sqrt()
}

/// Determinant via LU.
pub fn det(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 1.0;
    }
    m.determinant()
}

/// Natural log of a positive determinant, `None` when `det <= 0`.
pub fn log_det(m: &DMatrix<f64>) -> Option<f64> {
    let d = det(m);
    if d > 0.0 {
        Some(d.ln())
    } else {
        None
    }
}

pub fn trace(m: &DMatrix<f64>) -> f64 {
    m.trace()
}

pub fn outer(a: &DVector<f64>, b: &DVector<f64>) -> DMatrix<f64> {
    a * b.transpose()
}
