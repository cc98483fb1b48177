//! Manifold models: closed-form flat space and round spheres, plus a generic
//! RK4 frame-bundle backend used as an oracle.

mod any;
mod flat;
mod rk4;
mod sphere;

pub use any::AnyManifold;
pub use flat::Flat;
pub use rk4::{Embedded, Rk4Manifold};
pub use sphere::Sphere;

use alloc::string::String;
use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;

/// A point in ambient coordinates.
pub type Point = DVector<f64>;
/// A tangent vector in ambient coordinates.
pub type Tangent = DVector<f64>;

/// Relative tolerance for the tangency check on inputs.
pub const TANGENT_TOL: f64 = 1e-8;
/// `log_map` refuses pairs at distance >= injectivity radius minus this.
pub const CUT_LOCUS_MARGIN: f64 = 1e-9;

/// An orthonormal frame `u: R^d -> T_xM`, stored as an `ambient x d` matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Frame {
    pub point: Point,
    pub basis: DMatrix<f64>,
}

impl Frame {
    pub fn new(point: Point, basis: DMatrix<f64>) -> Self {
        Frame { point, basis }
    }

    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    /// `u a` for frame coordinates `a`.
    pub fn apply(&self, a: &DVector<f64>) -> Tangent {
        &self.basis * a
    }

    /// `u^{-1} w` for a tangent vector `w`.
    pub fn coords(&self, w: &Tangent) -> DVector<f64> {
        self.basis.tr_mul(w)
    }

    pub fn orthonormality_defect(&self) -> f64 {
        linalg::orthonormality_defect(&self.basis)
    }
}

pub trait Manifold: Send + Sync {
    /// Registry name such as `sphere-2`.
    fn name(&self) -> String;

    fn dim(&self) -> usize;

    fn ambient_dim(&self) -> usize;

    fn injectivity_radius(&self) -> f64;

    fn base_point(&self) -> Point;

    fn base_frame(&self) -> Frame;

    /// Size of the normal component of `v` at `x`.
    fn normal_defect(&self, x: &Point, v: &DVector<f64>) -> f64;

    /// Orthogonal projection of an ambient vector onto `T_xM`.
    fn project_tangent(&self, x: &Point, a: &DVector<f64>) -> Tangent;

    /// Exponential map without any input checks.
    fn exp_map_unchecked(&self, x: &Point, v: &Tangent) -> Point;

    fn log_map(&self, x: &Point, y: &Point) -> Result<Tangent>;

    /// Parallel transport of `w` along `t -> exp(x, t v)`, `t in [0, 1]`.
    fn transport_unchecked(&self, x: &Point, v: &Tangent, w: &Tangent) -> Tangent;

    /// `Omega_u(a, b)` as a `d x d` matrix acting on frame coordinates.
    fn curvature_omega(&self, u: &Frame, a: &DVector<f64>, b: &DVector<f64>) -> DMatrix<f64>;

    fn scalar(&self, x: &Point) -> f64;

    /// Bound on the curvature operator norm and its covariant derivative.
    fn curvature_bound(&self) -> f64;

    /// `Some(K)` when the sectional curvature is the constant `K`.
    fn constant_curvature(&self) -> Option<f64> {
        None
    }

    fn exp_map(&self, x: &Point, v: &Tangent) -> Result<Point> {
        self.check_tangent(x, v)?;
        Ok(self.exp_map_unchecked(x, v))
    }

    fn distance(&self, x: &Point, y: &Point) -> Result<f64> {
        Ok(self.log_map(x, y)?.norm())
    }

    fn transport(&self, x: &Point, v: &Tangent, w: &Tangent) -> Result<Tangent> {
        self.check_tangent(x, v)?;
        self.check_tangent(x, w)?;
        Ok(self.transport_unchecked(x, v, w))
    }

    /// Moves the frame to `exp(x, v)` by parallel transport, then
    /// re-orthonormalizes.
    fn transport_frame(&self, u: &Frame, v: &Tangent) -> Frame {
        let point = self.exp_map_unchecked(&u.point, v);
        let mut basis = u.basis.clone();
        for j in 0..basis.ncols() {
            let col = u.basis.column(j).clone_owned();
            basis.set_column(j, &self.transport_unchecked(&u.point, v, &col));
        }
        linalg::gram_schmidt(&mut basis);
        Frame { point, basis }
    }

    /// Ricci tensor in frame coordinates.
    fn ricci_frame(&self, u: &Frame) -> DMatrix<f64> {
        ricci_from_omega(self, u)
    }

    fn check_tangent(&self, x: &Point, v: &DVector<f64>) -> Result<()> {
        if v.len() != self.ambient_dim() {
            return Err(Error::Dimension { expected: self.ambient_dim(), got: v.len() });
        }
        let defect = self.normal_defect(x, v);
        if defect > TANGENT_TOL * v.norm().max(1.0) {
            return Err(Error::NotTangent { defect });
        }
        Ok(())
    }
}

/// Contracts the curvature operator: `<Ric a, b> = -tr(v -> Omega(a, v) b)`.
pub fn ricci_from_omega<M: Manifold + ?Sized>(m: &M, u: &Frame) -> DMatrix<f64> {
    let d = m.dim();
    let mut ric = DMatrix::zeros(d, d);
    for i in 0..d {
        let ei = unit(d, i);
        for a in 0..d {
            let om = m.curvature_omega(u, &unit(d, a), &ei);
            for b in 0..d {
                ric[(a, b)] -= om[(i, b)];
            }
        }
    }
    ric
}

/// `K (<b, c> a - <a, c> b)` as a matrix in `c`.
pub(crate) fn constant_curvature_omega(k: f64, a: &DVector<f64>, b: &DVector<f64>) -> DMatrix<f64> {
    (a * b.transpose() - b * a.transpose()) * k
}

pub fn unit(d: usize, i: usize) -> DVector<f64> {
    DVector::from_fn(d, |k, _| if k == i { 1.0 } else { 0.0 })
}
