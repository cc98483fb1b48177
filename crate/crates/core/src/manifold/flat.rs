use alloc::format;
use alloc::string::String;
use nalgebra::{DMatrix, DVector};

use super::{Frame, Manifold, Point, Tangent};
use crate::error::Result;

/// Euclidean space `R^d` with the identity frame at the origin.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Flat {
    pub d: usize,
}

impl Flat {
    pub fn new(d: usize) -> Self {
        Flat { d }
    }
}

impl Manifold for Flat {
    fn name(&self) -> String {
        format!("flat-{}", self.d)
    }

    fn dim(&self) -> usize {
        self.d
    }

    fn ambient_dim(&self) -> usize {
        self.d
    }

    fn injectivity_radius(&self) -> f64 {
        f64::INFINITY
    }

    fn base_point(&self) -> Point {
        DVector::zeros(self.d)
    }

    fn base_frame(&self) -> Frame {
        Frame::new(self.base_point(), DMatrix::identity(self.d, self.d))
    }

    fn normal_defect(&self, _x: &Point, _v: &DVector<f64>) -> f64 {
        0.0
    }

    fn project_tangent(&self, _x: &Point, a: &DVector<f64>) -> Tangent {
        a.clone()
    }

    fn exp_map_unchecked(&self, x: &Point, v: &Tangent) -> Point {
        x + v
    }

    fn log_map(&self, x: &Point, y: &Point) -> Result<Tangent> {
        Ok(y - x)
    }

    fn transport_unchecked(&self, _x: &Point, _v: &Tangent, w: &Tangent) -> Tangent {
        w.clone()
    }

    fn transport_frame(&self, u: &Frame, v: &Tangent) -> Frame {
        Frame::new(&u.point + v, u.basis.clone())
    }

    fn curvature_omega(&self, _u: &Frame, _a: &DVector<f64>, _b: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::zeros(self.d, self.d)
    }

    fn ricci_frame(&self, _u: &Frame) -> DMatrix<f64> {
        DMatrix::zeros(self.d, self.d)
    }

    fn scalar(&self, _x: &Point) -> f64 {
        0.0
    }

    fn curvature_bound(&self) -> f64 {
        0.0
    }

    fn constant_curvature(&self) -> Option<f64> {
        Some(0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exp_log_are_translations() {
        let m = Flat::new(3);
        let x = DVector::from_vec(alloc::vec![1.0, -2.0, 0.5]);
        let v = DVector::from_vec(alloc::vec![0.25, 4.0, -1.0]);
        let y = m.exp_map(&x, &v).unwrap();
        assert_eq!(m.log_map(&x, &y).unwrap(), &y - &x);
        assert_eq!(m.transport(&x, &v, &v).unwrap(), v);
        assert_eq!(m.ricci_frame(&m.base_frame()), DMatrix::zeros(3, 3));
    }
}
