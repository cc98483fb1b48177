//! Finite-dimensional approximations of path-space measures on Riemannian
//! manifolds: piecewise-geodesic paths, Jacobi-field densities, Monte Carlo
//! estimators, the curvature-corrected heat semigroup and integration by
//! parts on the approximating path spaces.
//!
//! The crate is `no_std` and only needs `alloc`. Parallel execution, file
//! formats and the command-line front end live in the `pathmeasure` crate.

#![no_std]

extern crate alloc;

pub mod error;
pub mod heat;
pub mod ibp;
pub mod jacobi;
pub mod linalg;
pub mod manifold;
pub mod mc;
pub mod path;
pub mod quadrature;
pub mod rng;
pub mod stats;

pub use error::{Error, Result};
pub use manifold::{AnyManifold, Flat, Frame, Manifold, Point, Rk4Manifold, Sphere, Tangent};
pub use path::{DrivingPath, GeodesicPath, Partition, PathTangent};
