use alloc::format;
use alloc::string::String;
use core::str::FromStr;
use nalgebra::{DMatrix, DVector};

use super::{Flat, Frame, Manifold, Point, Sphere, Tangent};
use crate::error::{Error, Result};

/// Runtime-selected model, parsed from names like `flat-2` or `sphere-3`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AnyManifold {
    Flat(Flat),
    Sphere(Sphere),
}

impl FromStr for AnyManifold {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, d) = s
            .rsplit_once('-')
            .ok_or_else(|| Error::Domain(format!("unknown manifold '{s}'")))?;
        let d: usize = d
            .parse()
            .map_err(|_| Error::Domain(format!("bad dimension in manifold name '{s}'")))?;
        if d == 0 {
            return Err(Error::Domain(format!("dimension must be positive in '{s}'")));
        }
        match kind {
            "flat" => Ok(AnyManifold::Flat(Flat::new(d))),
            "sphere" => Ok(AnyManifold::Sphere(Sphere::new(d))),
            _ => Err(Error::Domain(format!("unknown manifold '{s}'"))),
        }
    }
}

macro_rules! dispatch {
    ($self:ident, $m:ident => $e:expr) => {
        match $self {
            AnyManifold::Flat($m) => $e,
            AnyManifold::Sphere($m) => $e,
        }
    };
}

impl Manifold for AnyManifold {
    fn name(&self) -> String {
        dispatch!(self, m => m.name())
    }
    fn dim(&self) -> usize {
        dispatch!(self, m => m.dim())
    }
    fn ambient_dim(&self) -> usize {
        dispatch!(self, m => m.ambient_dim())
    }
    fn injectivity_radius(&self) -> f64 {
        dispatch!(self, m => m.injectivity_radius())
    }
    fn base_point(&self) -> Point {
        dispatch!(self, m => m.base_point())
    }
    fn base_frame(&self) -> Frame {
        dispatch!(self, m => m.base_frame())
    }
    fn normal_defect(&self, x: &Point, v: &DVector<f64>) -> f64 {
        dispatch!(self, m => m.normal_defect(x, v))
    }
    fn project_tangent(&self, x: &Point, a: &DVector<f64>) -> Tangent {
        dispatch!(self, m => m.project_tangent(x, a))
    }
    fn exp_map_unchecked(&self, x: &Point, v: &Tangent) -> Point {
        dispatch!(self, m => m.exp_map_unchecked(x, v))
    }
    fn log_map(&self, x: &Point, y: &Point) -> Result<Tangent> {
        dispatch!(self, m => m.log_map(x, y))
    }
    fn transport_unchecked(&self, x: &Point, v: &Tangent, w: &Tangent) -> Tangent {
        dispatch!(self, m => m.transport_unchecked(x, v, w))
    }
    fn transport_frame(&self, u: &Frame, v: &Tangent) -> Frame {
        dispatch!(self, m => m.transport_frame(u, v))
    }
    fn curvature_omega(&self, u: &Frame, a: &DVector<f64>, b: &DVector<f64>) -> DMatrix<f64> {
        dispatch!(self, m => m.curvature_omega(u, a, b))
    }
    fn ricci_frame(&self, u: &Frame) -> DMatrix<f64> {
        dispatch!(self, m => m.ricci_frame(u))
    }
    fn scalar(&self, x: &Point) -> f64 {
        dispatch!(self, m => m.scalar(x))
    }
    fn curvature_bound(&self) -> f64 {
        dispatch!(self, m => m.curvature_bound())
    }
    fn constant_curvature(&self) -> Option<f64> {
        dispatch!(self, m => m.constant_curvature())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_registry_names() {
        assert_eq!("flat-3".parse::<AnyManifold>().unwrap(), AnyManifold::Flat(Flat::new(3)));
        assert_eq!("sphere-2".parse::<AnyManifold>().unwrap(), AnyManifold::Sphere(Sphere::new(2)));
        assert!("torus-2".parse::<AnyManifold>().is_err());
        assert!("sphere-0".parse::<AnyManifold>().is_err());
        assert!("sphere".parse::<AnyManifold>().is_err());
    }
}
