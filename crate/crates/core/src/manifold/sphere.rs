use alloc::format;
use alloc::string::String;
#[allow(unused_imports)] // inherent float methods shadow these when std is linked
use num_traits::Float as _;
use nalgebra::{DMatrix, DVector};

use super::{constant_curvature_omega, Frame, Manifold, Point, Tangent, CUT_LOCUS_MARGIN};
use crate::error::{Error, Result};

/// Unit sphere `S^d` embedded in `R^{d+1}`, based at the last basis vector
/// with frame `(e_1, ..., e_d)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Sphere {
    pub d: usize,
}

impl Sphere {
    pub fn new(d: usize) -> Self {
        Sphere { d }
    }
}

impl Manifold for Sphere {
    fn name(&self) -> String {
        format!("sphere-{}", self.d)
    }

    fn dim(&self) -> usize {
        self.d
    }

    fn ambient_dim(&self) -> usize {
        self.d + 1
    }

    fn injectivity_radius(&self) -> f64 {
        core::f64::consts::PI
    }

    fn base_point(&self) -> Point {
        super::unit(self.d + 1, self.d)
    }

    fn base_frame(&self) -> Frame {
        Frame::new(self.base_point(), DMatrix::identity(self.d + 1, self.d))
    }

    fn normal_defect(&self, x: &Point, v: &DVector<f64>) -> f64 {
        x.dot(v).abs()
    }

    fn project_tangent(&self, x: &Point, a: &DVector<f64>) -> Tangent {
        a - x * x.dot(a)
    }

    fn exp_map_unchecked(&self, x: &Point, v: &Tangent) -> Point {
        let r = v.norm();
        if r == 0.0 {
            return x.clone();
        }
        let y = x * r.cos() + v * (r.sin() / r);
        let n = y.norm();
        y / n
    }

    fn log_map(&self, x: &Point, y: &Point) -> Result<Tangent> {
        let c = x.dot(y);
        let w = y - x * c;
        let sn = w.norm();
        let theta = sn.atan2(c);
        let radius = self.injectivity_radius();
        if theta >= radius - CUT_LOCUS_MARGIN {
            return Err(Error::CutLocus { dist: theta, radius });
        }
        if sn == 0.0 {
            return Ok(DVector::zeros(x.len()));
        }
        Ok(w * (theta / sn))
    }

    fn transport_unchecked(&self, x: &Point, v: &Tangent, w: &Tangent) -> Tangent {
        let r = v.norm();
        if r == 0.0 {
            return w.clone();
        }
        let e = v / r;
        let a = w.dot(&e);
        w + (e * (r.cos() - 1.0) - x * r.sin()) * a
    }

    fn transport_frame(&self, u: &Frame, v: &Tangent) -> Frame {
        let r = v.norm();
        if r == 0.0 {
            return u.clone();
        }
        let (sn, cs) = r.sin_cos();
        let x = &u.point;
        let point = self.exp_map_unchecked(x, v);
        let mut basis = u.basis.clone();
        let rows = basis.nrows();
        for j in 0..basis.ncols() {
            let mut a = 0.0;
            for k in 0..rows {
                a += v[k] * basis[(k, j)];
            }
            a /= r;
            for k in 0..rows {
                basis[(k, j)] += a * (v[k] / r * (cs - 1.0) - x[k] * sn);
            }
        }
        crate::linalg::gram_schmidt(&mut basis);
        Frame { point, basis }
    }

    fn curvature_omega(&self, _u: &Frame, a: &DVector<f64>, b: &DVector<f64>) -> DMatrix<f64> {
        constant_curvature_omega(1.0, a, b)
    }

    fn ricci_frame(&self, _u: &Frame) -> DMatrix<f64> {
        DMatrix::identity(self.d, self.d) * (self.d as f64 - 1.0)
    }

    fn scalar(&self, _x: &Point) -> f64 {
        let d = self.d as f64;
        d * (d - 1.0)
    }

    fn curvature_bound(&self) -> f64 {
        1.0
    }

    fn constant_curvature(&self) -> Option<f64> {
        Some(1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::super::{ricci_from_omega, unit};
    use super::*;
    use proptest::prelude::*;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(xs)
    }

    #[test]
    fn quarter_turn_from_north_pole() {
        let m = Sphere::new(2);
        let o = m.base_point();
        let y = m.exp_map(&o, &v(&[core::f64::consts::FRAC_PI_2, 0.0, 0.0])).unwrap();
        assert!((y - v(&[1.0, 0.0, 0.0])).norm() < 1e-15);
    }

    #[test]
    fn antipodal_log_is_cut_locus() {
        let m = Sphere::new(2);
        let err = m.log_map(&v(&[0.0, 0.0, 1.0]), &v(&[0.0, 0.0, -1.0])).unwrap_err();
        assert!(matches!(err, Error::CutLocus { .. }));
    }

    #[test]
    fn non_tangent_input_is_rejected() {
        let m = Sphere::new(2);
        let err = m.exp_map(&m.base_point(), &v(&[0.1, 0.0, 0.2])).unwrap_err();
        assert!(matches!(err, Error::NotTangent { .. }));
    }

    #[test]
    fn ricci_and_scalar_match_contraction() {
        for d in 1..5 {
            let m = Sphere::new(d);
            let u = m.base_frame();
            let ric = ricci_from_omega(&m, &u);
            assert!((ric - m.ricci_frame(&u)).norm() < 1e-14);
            assert!((m.ricci_frame(&u).trace() - m.scalar(&u.point)).abs() < 1e-14);
        }
    }

    #[test]
    fn trace_of_jacobi_operator_is_minus_ricci() {
        let m = Sphere::new(3);
        let u = m.base_frame();
        let db = v(&[0.3, -0.2, 0.7]);
        let mut tr = 0.0;
        for i in 0..3 {
            tr += (m.curvature_omega(&u, &db, &unit(3, i)) * &db)[i];
        }
        let ric = m.ricci_frame(&u);
        assert!((tr + db.dot(&(ric * &db))).abs() < 1e-14);
    }

    // Holonomy of a small geodesic triangle with legs t*a, t*b recovers
    // -Area * Omega(a, b) for orthonormal a, b.
    #[test]
    fn curvature_matches_transport_holonomy() {
        let m = Sphere::new(2);
        let u0 = m.base_frame();
        let x0 = u0.point.clone();
        let a = v(&[1.0, 0.0]);
        let b = v(&[0.0, 1.0]);
        let w = v(&[0.6, 0.8]);
        let t = 1e-3;
        let x1 = m.exp_map(&x0, &u0.apply(&(&a * t))).unwrap();
        let x2 = m.exp_map(&x0, &u0.apply(&(&b * t))).unwrap();
        let mut cur = u0.apply(&w);
        let legs = [(&x0, &x1), (&x1, &x2), (&x2, &x0)];
        for (p, q) in legs {
            let lv = m.log_map(p, q).unwrap();
            cur = m.transport(p, &lv, &cur).unwrap();
        }
        let area = t * t / 2.0;
        let hol = u0.coords(&(cur - u0.apply(&w))) / area;
        let expected = -(m.curvature_omega(&u0, &a, &b) * &w);
        assert!((hol - &expected).norm() < 1e-2 * expected.norm());
    }

    fn tangent_at(m: &Sphere, x: &Point, raw: &[f64]) -> Tangent {
        m.project_tangent(x, &v(raw))
    }

    proptest! {
        #[test]
        fn exp_log_roundtrip(p in prop::collection::vec(-1.0f64..1.0, 3), raw in prop::collection::vec(-2.0f64..2.0, 3)) {
            let m = Sphere::new(2);
            let x = v(&p);
            prop_assume!(x.norm() > 0.1);
            let x = x.normalize();
            let vt = tangent_at(&m, &x, &raw);
            prop_assume!(vt.norm() < 3.0);
            let y = m.exp_map(&x, &vt).unwrap();
            let back = m.log_map(&x, &y).unwrap();
            prop_assert!((back - &vt).norm() < 1e-10);
        }

        #[test]
        fn transport_is_an_isometry(p in prop::collection::vec(-1.0f64..1.0, 4), rv in prop::collection::vec(-3.0f64..3.0, 4), rw in prop::collection::vec(-1.0f64..1.0, 4), rz in prop::collection::vec(-1.0f64..1.0, 4)) {
            let m = Sphere::new(3);
            let x = v(&p);
            prop_assume!(x.norm() > 0.1);
            let x = x.normalize();
            let vt = tangent_at(&m, &x, &rv);
            let w = tangent_at(&m, &x, &rw);
            let z = tangent_at(&m, &x, &rz);
            let y = m.exp_map(&x, &vt).unwrap();
            let tw = m.transport(&x, &vt, &w).unwrap();
            let tz = m.transport(&x, &vt, &z).unwrap();
            prop_assert!((tw.dot(&tz) - w.dot(&z)).abs() < 1e-12);
            prop_assert!(tw.dot(&y).abs() < 1e-12);
        }
    }

    #[test]
    fn frame_transport_stays_orthonormal() {
        let m = Sphere::new(2);
        let mut u = m.base_frame();
        for k in 0..1000 {
            let a = v(&[0.3 * ((k % 7) as f64 - 3.0), 0.2 * ((k % 5) as f64 - 2.0)]);
            let vt = u.apply(&a);
            u = m.transport_frame(&u, &vt);
        }
        assert!(u.orthonormality_defect() < 1e-12);
        assert!(u.coords(&u.point).norm() < 1e-12);
    }
}
