//! Named observables: functions of the path endpoint.

use anyhow::{bail, Context};
use nalgebra::DVector;
use pathmeasure_core::ibp::VertexFunction;
use pathmeasure_core::mc::PathFunctional;
use pathmeasure_core::{AnyManifold, GeodesicPath, Manifold, Point, Tangent};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Shape {
    One,
    Linear,
    Squared,
}

/// `one`, `endpoint-<i>`, `endpoint-last` and their `-squared` variants,
/// with `i` a 1-based ambient coordinate.
#[derive(Clone, Debug, PartialEq)]
pub struct Observable {
    pub shape: Shape,
    /// 0-based ambient coordinate.
    pub index: usize,
    ambient_dim: usize,
}

impl Observable {
    pub fn parse(name: &str, m: &AnyManifold) -> anyhow::Result<Self> {
        let ambient_dim = m.ambient_dim();
        if name == "one" {
            return Ok(Observable { shape: Shape::One, index: 0, ambient_dim });
        }
        let Some(rest) = name.strip_prefix("endpoint-") else {
            bail!("unknown observable '{name}'");
        };
        let (coord, shape) = match rest.strip_suffix("-squared") {
            Some(c) => (c, Shape::Squared),
            None => (rest, Shape::Linear),
        };
        let index = if coord == "last" {
            ambient_dim - 1
        } else {
            let i: usize = coord.parse().with_context(|| format!("bad coordinate in observable '{name}'"))?;
            if i == 0 || i > ambient_dim {
                bail!("observable '{name}' needs coordinate 1..={ambient_dim} on {}", m.name());
            }
            i - 1
        };
        Ok(Observable { shape, index, ambient_dim })
    }

    pub fn at(&self, x: &Point) -> f64 {
        match self.shape {
            Shape::One => 1.0,
            Shape::Linear => x[self.index],
            Shape::Squared => x[self.index] * x[self.index],
        }
    }

    fn direction(&self) -> DVector<f64> {
        let mut a = DVector::zeros(self.ambient_dim);
        a[self.index] = 1.0;
        a
    }
}

impl PathFunctional for Observable {
    fn eval(&self, sigma: &GeodesicPath) -> f64 {
        self.at(sigma.endpoint())
    }
}

impl VertexFunction for Observable {
    fn eval(&self, vertices: &[Point]) -> f64 {
        self.at(&vertices[vertices.len() - 1])
    }

    fn gradient<M: Manifold + ?Sized>(&self, m: &M, vertices: &[Point]) -> Option<Vec<Tangent>> {
        let n = vertices.len();
        let last = &vertices[n - 1];
        let g = match self.shape {
            Shape::One => DVector::zeros(self.ambient_dim),
            Shape::Linear => m.project_tangent(last, &self.direction()),
            // Projection of an ambient gradient is exact only for linear
            // functions; leave the rest to finite differences.
            Shape::Squared => return None,
        };
        let mut out: Vec<Tangent> = vertices[..n - 1].iter().map(|x| DVector::zeros(x.len())).collect();
        out.push(g);
        Some(out)
    }
}
