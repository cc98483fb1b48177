use alloc::format;
use alloc::string::String;
use nalgebra::{DMatrix, DVector};

use super::{Flat, Frame, Manifold, Point, Sphere, Tangent};
use crate::error::Result;

/// Manifolds embedded in Euclidean space whose Levi-Civita connection is
/// described by a normal correction term.
pub trait Embedded: Manifold {
    /// `Gamma(x)(v, w)` such that parallel transport of `w` along a curve with
    /// velocity `v` solves `w' = -Gamma(x)(v, w)` and geodesics solve
    /// `x'' = -Gamma(x)(x', x')`.
    fn connection_term(&self, x: &Point, v: &Tangent, w: &Tangent) -> DVector<f64>;
}

impl Embedded for Flat {
    fn connection_term(&self, x: &Point, _v: &Tangent, _w: &Tangent) -> DVector<f64> {
        DVector::zeros(x.len())
    }
}

impl Embedded for Sphere {
    fn connection_term(&self, x: &Point, v: &Tangent, w: &Tangent) -> DVector<f64> {
        x * v.dot(w)
    }
}

/// Generic backend that integrates the frame-bundle ODE with classical RK4
/// instead of using closed forms. Curvature and `log_map` are taken from the
/// wrapped model. Reports no constant curvature, so Jacobi fields are also
/// integrated numerically.
#[derive(Clone, Debug)]
pub struct Rk4Manifold<M> {
    pub inner: M,
    pub steps: usize,
}

impl<M: Embedded> Rk4Manifold<M> {
    /// Step size `h` on the unit parameter interval.
    pub fn new(inner: M, h: f64) -> Self {
        let steps = num_traits::Float::ceil(1.0 / h) as usize;
        Rk4Manifold { inner, steps: steps.max(1) }
    }

    /// Integrates `x' = p`, `p' = -G(x)(p, p)`, `w_j' = -G(x)(p, w_j)` on `[0, 1]`.
    fn flow(&self, x: &Point, v: &Tangent, ws: &[Tangent]) -> (Point, alloc::vec::Vec<Tangent>) {
        let m = &self.inner;
        let h = 1.0 / self.steps as f64;
        let k = ws.len();
        let rhs = |x: &Point, p: &Tangent, ws: &[Tangent]| {
            let dp = -m.connection_term(x, p, p);
            let dws: alloc::vec::Vec<Tangent> = ws.iter().map(|w| -m.connection_term(x, p, w)).collect();
            (p.clone(), dp, dws)
        };
        let mut x = x.clone();
        let mut p = v.clone();
        let mut w: alloc::vec::Vec<Tangent> = ws.to_vec();
        for _ in 0..self.steps {
            let (k1x, k1p, k1w) = rhs(&x, &p, &w);
            let w2: alloc::vec::Vec<_> = (0..k).map(|j| &w[j] + &k1w[j] * (h / 2.0)).collect();
            let (k2x, k2p, k2w) = rhs(&(&x + &k1x * (h / 2.0)), &(&p + &k1p * (h / 2.0)), &w2);
            let w3: alloc::vec::Vec<_> = (0..k).map(|j| &w[j] + &k2w[j] * (h / 2.0)).collect();
            let (k3x, k3p, k3w) = rhs(&(&x + &k2x * (h / 2.0)), &(&p + &k2p * (h / 2.0)), &w3);
            let w4: alloc::vec::Vec<_> = (0..k).map(|j| &w[j] + &k3w[j] * h).collect();
            let (k4x, k4p, k4w) = rhs(&(&x + &k3x * h), &(&p + &k3p * h), &w4);
            x += (k1x + k2x * 2.0 + k3x * 2.0 + k4x) * (h / 6.0);
            p += (k1p + k2p * 2.0 + k3p * 2.0 + k4p) * (h / 6.0);
            for j in 0..k {
                w[j] += (&k1w[j] + &k2w[j] * 2.0 + &k3w[j] * 2.0 + &k4w[j]) * (h / 6.0);
            }
        }
        (x, w)
    }
}

impl<M: Embedded> Manifold for Rk4Manifold<M> {
    fn name(&self) -> String {
        format!("rk4({})", self.inner.name())
    }

    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn ambient_dim(&self) -> usize {
        self.inner.ambient_dim()
    }

    fn injectivity_radius(&self) -> f64 {
        self.inner.injectivity_radius()
    }

    fn base_point(&self) -> Point {
        self.inner.base_point()
    }

    fn base_frame(&self) -> Frame {
        self.inner.base_frame()
    }

    fn normal_defect(&self, x: &Point, v: &DVector<f64>) -> f64 {
        self.inner.normal_defect(x, v)
    }

    fn project_tangent(&self, x: &Point, a: &DVector<f64>) -> Tangent {
        self.inner.project_tangent(x, a)
    }

    fn exp_map_unchecked(&self, x: &Point, v: &Tangent) -> Point {
        self.flow(x, v, &[]).0
    }

    fn log_map(&self, x: &Point, y: &Point) -> Result<Tangent> {
        self.inner.log_map(x, y)
    }

    fn transport_unchecked(&self, x: &Point, v: &Tangent, w: &Tangent) -> Tangent {
        let (_, mut ws) = self.flow(x, v, core::slice::from_ref(w));
        ws.pop().unwrap()
    }

    fn transport_frame(&self, u: &Frame, v: &Tangent) -> Frame {
        let cols: alloc::vec::Vec<Tangent> = (0..u.dim()).map(|j| u.basis.column(j).clone_owned()).collect();
        let (point, ws) = self.flow(&u.point, v, &cols);
        let mut basis = DMatrix::from_columns(&ws);
        crate::linalg::gram_schmidt(&mut basis);
        Frame { point, basis }
    }

    fn curvature_omega(&self, u: &Frame, a: &DVector<f64>, b: &DVector<f64>) -> DMatrix<f64> {
        self.inner.curvature_omega(u, a, b)
    }

    fn ricci_frame(&self, u: &Frame) -> DMatrix<f64> {
        self.inner.ricci_frame(u)
    }

    fn scalar(&self, x: &Point) -> f64 {
        self.inner.scalar(x)
    }

    fn curvature_bound(&self) -> f64 {
        self.inner.curvature_bound()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rk4_matches_closed_form_sphere() {
        let s = Sphere::new(2);
        let r = Rk4Manifold::new(s, 1e-3);
        let u = s.base_frame();
        for (a, b) in [(0.3, -0.1), (1.2, 0.9), (2.5, -1.0)] {
            let v = u.apply(&DVector::from_row_slice(&[a, b]));
            let fc = s.transport_frame(&u, &v);
            let fr = r.transport_frame(&u, &v);
            assert!((fc.point - fr.point).norm() < 1e-10);
            assert!((fc.basis - fr.basis).norm() < 1e-10);
        }
    }
}
