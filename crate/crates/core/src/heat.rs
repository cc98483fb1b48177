//! Curvature-corrected short-time kernel `Q_s`, its Euler iteration on a
//! quadrature grid, and reference heat semigroups.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;
use nalgebra::DVector;
#[allow(unused_imports)] // inherent float methods shadow these when std is linked
use num_traits::Float as _;

use crate::error::{Error, Result};
use crate::manifold::{AnyManifold, Manifold, Point};
use crate::quadrature::gauss_legendre;

/// Default scalar-curvature coefficient in `Q_s`.
pub const KAPPA_DEFAULT: f64 = 1.0 / 12.0;

/// Tail factor below which the Legendre expansion is truncated.
pub const LEGENDRE_TAIL: f64 = 1e-14;

/// Geodesic distance extended to the cut locus (`pi` for antipodes on the
/// unit sphere).
pub fn global_distance<M: Manifold + ?Sized>(m: &M, x: &Point, y: &Point) -> f64 {
    match m.distance(x, y) {
        Ok(d) => d,
        Err(Error::CutLocus { dist, .. }) => dist,
        Err(_) => f64::NAN,
    }
}

/// `(2 pi s)^{-d/2} exp(-d(x, y)^2 / 2s + kappa s Scal(x) + kappa s Scal(y))`.
pub fn q_kernel<M: Manifold + ?Sized>(m: &M, x: &Point, y: &Point, s: f64, kappa: f64) -> f64 {
    let d = m.dim() as f64;
    let dist = global_distance(m, x, y);
    (2.0 * PI * s).powf(-d / 2.0) * (-dist * dist / (2.0 * s) + kappa * s * (m.scalar(x) + m.scalar(y))).exp()
}

/// Heat kernel of `e^{(s/2) Delta}` on the unit 2-sphere as a function of
/// `cos theta`, from its Legendre expansion.
pub fn sphere_heat_kernel(cos_theta: f64, s: f64) -> f64 {
    let mut sum = 0.0;
    let (mut p_prev, mut p) = (0.0, 1.0);
    let mut l = 0usize;
    loop {
        let lf = l as f64;
        let decay = (-lf * (lf + 1.0) * s / 2.0).exp();
        if decay < LEGENDRE_TAIL {
            break;
        }
        sum += (2.0 * lf + 1.0) / (4.0 * PI) * decay * p;
        let next = ((2.0 * lf + 1.0) * cos_theta * p - lf * p_prev) / (lf + 1.0);
        p_prev = p;
        p = next;
        l += 1;
    }
    sum
}

/// Grid layout.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum GridSpec {
    /// Gauss-Legendre in `cos(colatitude)` times uniform longitude.
    Sphere { n_lat: usize, n_lon: usize },
    /// Tensor Gauss-Legendre on `[-half_width, half_width]^d`.
    FlatBox { nodes_per_axis: usize, half_width: Option<f64> },
}

impl GridSpec {
    /// `resolution` latitude rings (twice as many longitudes) on spheres;
    /// `resolution` nodes per axis and a box of half-width `6 sqrt(s_total)`
    /// on flat space.
    pub fn for_manifold(m: &AnyManifold, resolution: usize, s_total: f64) -> Self {
        match m {
            AnyManifold::Sphere(_) => GridSpec::Sphere { n_lat: resolution, n_lon: 2 * resolution },
            AnyManifold::Flat(_) => GridSpec::FlatBox { nodes_per_axis: resolution, half_width: Some(6.0 * s_total.sqrt()) },
        }
    }
}

#[derive(Clone, Debug)]
enum Storage {
    /// `K[a][b]`, row-major.
    Dense(Vec<f64>),
    /// Longitude-circulant blocks: `blocks[(i n_lat + k) n_lon + m]` is the
    /// entry from ring `i`, longitude 0 to ring `k`, longitude `m`.
    Zonal { n_lat: usize, n_lon: usize, blocks: Vec<f64> },
}

/// Quadrature grid with the weighted kernel matrix `K[a][b] = k(x_a, x_b) w_b`.
#[derive(Clone, Debug)]
pub struct HeatKernelGrid {
    pub manifold: AnyManifold,
    pub spec: GridSpec,
    pub nodes: Vec<Point>,
    pub weights: Vec<f64>,
    /// Time step of the stored kernel.
    pub s: f64,
    pub kappa: f64,
    storage: Storage,
}

fn grid_nodes(m: &AnyManifold, spec: GridSpec) -> Result<(Vec<Point>, Vec<f64>)> {
    match (m, spec) {
        (AnyManifold::Sphere(sp), GridSpec::Sphere { n_lat, n_lon }) => {
            if sp.d != 2 {
                return Err(Error::Capability(format!("quadrature grids exist for sphere-2 only, not sphere-{}", sp.d)));
            }
            if n_lat < 8 || n_lon < 8 {
                return Err(Error::Domain("grid resolution must be at least 8".into()));
            }
            let (mu, w) = gauss_legendre(n_lat);
            let mut nodes = Vec::with_capacity(n_lat * n_lon);
            let mut weights = Vec::with_capacity(n_lat * n_lon);
            for i in 0..n_lat {
                let st = (1.0 - mu[i] * mu[i]).sqrt();
                for j in 0..n_lon {
                    let phi = 2.0 * PI * j as f64 / n_lon as f64;
                    nodes.push(DVector::from_row_slice(&[st * phi.cos(), st * phi.sin(), mu[i]]));
                    weights.push(w[i] * 2.0 * PI / n_lon as f64);
                }
            }
            Ok((nodes, weights))
        }
        (AnyManifold::Flat(fl), GridSpec::FlatBox { nodes_per_axis, half_width }) => {
            let l = half_width.ok_or_else(|| Error::Domain("flat grids need a truncation half-width".into()))?;
            if nodes_per_axis < 8 {
                return Err(Error::Domain("grid resolution must be at least 8".into()));
            }
            if fl.d > 2 {
                return Err(Error::Capability(format!("flat grids support d <= 2, not {}", fl.d)));
            }
            let (x, w) = gauss_legendre(nodes_per_axis);
            let mut nodes = Vec::new();
            let mut weights = Vec::new();
            if fl.d == 1 {
                for a in 0..nodes_per_axis {
                    nodes.push(DVector::from_row_slice(&[l * x[a]]));
                    weights.push(l * w[a]);
                }
            } else {
                for a in 0..nodes_per_axis {
                    for b in 0..nodes_per_axis {
                        nodes.push(DVector::from_row_slice(&[l * x[a], l * x[b]]));
                        weights.push(l * l * w[a] * w[b]);
                    }
                }
            }
            Ok((nodes, weights))
        }
        _ => Err(Error::Domain(format!("grid layout {spec:?} does not fit {}", m.name()))),
    }
}

impl HeatKernelGrid {
    /// Assembles the `Q_s` operator with coefficient `kappa`.
    pub fn build(m: &AnyManifold, spec: GridSpec, s: f64, kappa: f64) -> Result<Self> {
        if s.is_nan() || s <= 0.0 {
            return Err(Error::Domain("time step must be positive".into()));
        }
        Self::assemble(m, spec, s, kappa, |x, y| q_kernel(m, x, y, s, kappa))
    }

    fn assemble(m: &AnyManifold, spec: GridSpec, s: f64, kappa: f64, k: impl Fn(&Point, &Point) -> f64) -> Result<Self> {
        let (nodes, weights) = grid_nodes(m, spec)?;
        let storage = match spec {
            GridSpec::Sphere { n_lat, n_lon } => {
                let mut blocks = vec![0.0; n_lat * n_lat * n_lon];
                for i in 0..n_lat {
                    for kk in 0..n_lat {
                        for mm in 0..n_lon {
                            let b = kk * n_lon + mm;
                            blocks[(i * n_lat + kk) * n_lon + mm] = k(&nodes[i * n_lon], &nodes[b]) * weights[b];
                        }
                    }
                }
                Storage::Zonal { n_lat, n_lon, blocks }
            }
            GridSpec::FlatBox { .. } => {
                let n = nodes.len();
                let mut dense = vec![0.0; n * n];
                for a in 0..n {
                    for b in 0..n {
                        dense[a * n + b] = k(&nodes[a], &nodes[b]) * weights[b];
                    }
                }
                Storage::Dense(dense)
            }
        };
        Ok(HeatKernelGrid { manifold: *m, spec, nodes, weights, s, kappa, storage })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// `K[a][b] = k(x_a, x_b) w_b`.
    pub fn entry(&self, a: usize, b: usize) -> f64 {
        match &self.storage {
            Storage::Dense(k) => k[a * self.len() + b],
            Storage::Zonal { n_lat, n_lon, blocks } => {
                let (i, j) = (a / n_lon, a % n_lon);
                let (k, l) = (b / n_lon, b % n_lon);
                blocks[(i * n_lat + k) * n_lon + (l + n_lon - j) % n_lon]
            }
        }
    }

    /// `(K F)(x_a) = sum_b K[a][b] F_b`.
    pub fn apply(&self, f: &[f64]) -> Vec<f64> {
        let n = self.len();
        let mut out = vec![0.0; n];
        match &self.storage {
            Storage::Dense(k) => {
                for (a, o) in out.iter_mut().enumerate() {
                    *o = dot(&k[a * n..(a + 1) * n], f);
                }
            }
            Storage::Zonal { n_lat, n_lon, blocks } => {
                let (nl, nn) = (*n_lat, *n_lon);
                for i in 0..nl {
                    for j in 0..nn {
                        let mut acc = 0.0;
                        for k in 0..nl {
                            let row = &blocks[(i * nl + k) * nn..(i * nl + k + 1) * nn];
                            let fk = &f[k * nn..(k + 1) * nn];
                            acc += dot(&row[..nn - j], &fk[j..]) + dot(&row[nn - j..], &fk[..j]);
                        }
                        out[i * nn + j] = acc;
                    }
                }
            }
        }
        out
    }

    /// Node values of a function.
    pub fn sample(&self, f: impl Fn(&Point) -> f64) -> Vec<f64> {
        self.nodes.iter().map(f).collect()
    }

    pub fn integrate(&self, f: &[f64]) -> f64 {
        dot(&self.weights, f)
    }

    /// Relative sup and weighted-L2 errors of `approx` against `exact`.
    pub fn errors(&self, approx: &[f64], exact: &[f64]) -> (f64, f64) {
        let sup_e = approx.iter().zip(exact).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let sup_x = exact.iter().map(|b| b.abs()).fold(0.0, f64::max);
        let l2_e: f64 = self.weights.iter().zip(approx.iter().zip(exact)).map(|(w, (a, b))| w * (a - b) * (a - b)).sum();
        let l2_x: f64 = self.weights.iter().zip(exact).map(|(w, b)| w * b * b).sum();
        (sup_e / sup_x, (l2_e / l2_x).sqrt())
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `Q_{s/n}^n F` on a grid built with step `s_total / n`.
pub fn q_iterate(grid: &HeatKernelGrid, f: &[f64], n: usize, s_total: f64) -> Result<Vec<f64>> {
    if n == 0 {
        return Ok(f.to_vec());
    }
    let step = s_total / n as f64;
    if (grid.s - step).abs() > 1e-12 * step {
        return Err(Error::Domain(format!("grid step {} does not match s_total / n = {step}", grid.s)));
    }
    let mut cur = f.to_vec();
    for _ in 0..n {
        cur = grid.apply(&cur);
    }
    Ok(cur)
}

/// `e^{(s/2) Delta} F` at the grid nodes by quadrature against the exact heat
/// kernel (Gaussian on flat space, Legendre series on the 2-sphere).
pub fn reference_heat(grid: &HeatKernelGrid, f: &[f64], s: f64) -> Result<Vec<f64>> {
    let m = grid.manifold;
    let exact = match m {
        AnyManifold::Flat(fl) => {
            let d = fl.d as f64;
            HeatKernelGrid::assemble(&m, grid.spec, s, 0.0, |x, y| {
                (2.0 * PI * s).powf(-d / 2.0) * (-(x - y).norm_squared() / (2.0 * s)).exp()
            })?
        }
        AnyManifold::Sphere(sp) if sp.d == 2 => {
            HeatKernelGrid::assemble(&m, grid.spec, s, 0.0, |x, y| sphere_heat_kernel(x.dot(y).clamp(-1.0, 1.0), s))?
        }
        _ => return Err(Error::Capability(format!("no reference heat semigroup for {}", m.name()))),
    };
    Ok(exact.apply(f))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold::{Flat, Sphere};

    fn s2() -> AnyManifold {
        AnyManifold::Sphere(Sphere::new(2))
    }

    #[test]
    fn kernel_values() {
        let f = Flat::new(2);
        let o = f.base_point();
        assert!((q_kernel(&f, &o, &o, 1.0, KAPPA_DEFAULT) - 1.0 / (2.0 * PI)).abs() < 1e-15);
        let s = Sphere::new(2);
        let x = s.base_point();
        let expected = 1.0 / (0.2 * PI) * (1.0f64 / 30.0).exp();
        assert!((q_kernel(&s, &x, &x, 0.1, KAPPA_DEFAULT) - expected).abs() < 1e-13);
        let y = DVector::from_row_slice(&[0.6, 0.0, 0.8]);
        let (a, b) = (q_kernel(&s, &x, &y, 0.3, 0.1), q_kernel(&s, &y, &x, 0.3, 0.1));
        assert!((a - b).abs() < 1e-14 * a);
        let anti = -&x;
        assert!(q_kernel(&s, &x, &anti, 0.5, 0.0) > 0.0);
    }

    #[test]
    fn sphere_grid_weights_and_symmetry() {
        let g = HeatKernelGrid::build(&s2(), GridSpec::Sphere { n_lat: 16, n_lon: 32 }, 0.05, KAPPA_DEFAULT).unwrap();
        assert!((g.weights.iter().sum::<f64>() - 4.0 * PI).abs() < 1e-12);
        for (a, b) in [(0, 5), (17, 300), (100, 511), (33, 34)] {
            let qab = g.entry(a, b) / g.weights[b];
            let qba = g.entry(b, a) / g.weights[a];
            assert!((qab - qba).abs() < 1e-12 * qab.abs().max(1.0));
            assert!(g.entry(a, b) > 0.0);
        }
    }

    #[test]
    fn zonal_apply_matches_entries() {
        let g = HeatKernelGrid::build(&s2(), GridSpec::Sphere { n_lat: 8, n_lon: 16 }, 0.2, KAPPA_DEFAULT).unwrap();
        let f: Vec<f64> = g.nodes.iter().map(|x| x[0] * x[0] + x[1] - 0.3 * x[2]).collect();
        let fast = g.apply(&f);
        for (a, fa) in fast.iter().enumerate() {
            let slow: f64 = f.iter().enumerate().map(|(b, fb)| g.entry(a, b) * fb).sum();
            assert!((fa - slow).abs() < 1e-12);
        }
    }

    #[test]
    fn reference_heat_on_eigenfunctions() {
        let g = HeatKernelGrid::build(&s2(), GridSpec::Sphere { n_lat: 32, n_lon: 64 }, 0.1, KAPPA_DEFAULT).unwrap();
        let ones = vec![1.0; g.len()];
        let r = reference_heat(&g, &ones, 0.5).unwrap();
        assert!(r.iter().all(|v| (v - 1.0).abs() < 1e-10));
        let f = g.sample(|x| x[2]);
        let r = reference_heat(&g, &f, 0.5).unwrap();
        let (sup, _) = g.errors(&r, &f.iter().map(|v| v * (-0.5f64).exp()).collect::<Vec<_>>());
        assert!(sup < 1e-10);
        let y2 = g.sample(|x| 1.5 * x[2] * x[2] - 0.5);
        let r = reference_heat(&g, &y2, 0.3).unwrap();
        let (sup, _) = g.errors(&r, &y2.iter().map(|v| v * (-0.9f64).exp()).collect::<Vec<_>>());
        assert!(sup < 1e-10);
        let r = reference_heat(&g, &f, 0.01).unwrap();
        assert!(g.errors(&r, &f).0 < 0.011);
    }

    #[test]
    fn euler_iteration_converges_on_sphere() {
        let m = s2();
        let spec = GridSpec::Sphere { n_lat: 32, n_lon: 64 };
        let mut last = f64::INFINITY;
        for n in [2usize, 4, 8] {
            let g = HeatKernelGrid::build(&m, spec, 0.5 / n as f64, KAPPA_DEFAULT).unwrap();
            let f = g.sample(|x| x[2]);
            let exact: Vec<f64> = f.iter().map(|v| v * (-0.5f64).exp()).collect();
            let it = q_iterate(&g, &f, n, 0.5).unwrap();
            let (sup, _) = g.errors(&it, &exact);
            assert!(sup < last);
            last = sup;
            assert!(it.iter().zip(&f).all(|(a, b)| a * b >= 0.0));
        }
    }

    #[test]
    fn flat_chapman_kolmogorov() {
        let m = AnyManifold::Flat(Flat::new(1));
        let s = 1.0;
        let spec = GridSpec::for_manifold(&m, 160, s);
        let g = HeatKernelGrid::build(&m, spec, s / 4.0, KAPPA_DEFAULT).unwrap();
        let f = g.sample(|x| (-x[0] * x[0]).exp() * (1.0 + x[0]));
        let it = q_iterate(&g, &f, 4, s).unwrap();
        let r = reference_heat(&g, &f, s).unwrap();
        // interior nodes only: mass leaks across the truncation box
        for (a, x) in g.nodes.iter().enumerate() {
            if x[0].abs() < 3.0 {
                assert!((it[a] - r[a]).abs() < 1e-6, "x = {}: {} vs {}", x[0], it[a], r[a]);
            }
        }
    }

    #[test]
    fn grid_errors() {
        let fl = AnyManifold::Flat(Flat::new(1));
        assert!(HeatKernelGrid::build(&fl, GridSpec::FlatBox { nodes_per_axis: 16, half_width: None }, 0.1, 0.0).is_err());
        let s3 = AnyManifold::Sphere(Sphere::new(3));
        assert!(matches!(
            HeatKernelGrid::build(&s3, GridSpec::Sphere { n_lat: 8, n_lon: 16 }, 0.1, 0.0),
            Err(Error::Capability(_))
        ));
        let g = HeatKernelGrid::build(&s2(), GridSpec::Sphere { n_lat: 8, n_lon: 16 }, 0.1, 0.0).unwrap();
        let f = g.sample(|x| x[2]);
        assert!(q_iterate(&g, &f, 3, 0.5).is_err());
        assert_eq!(q_iterate(&g, &f, 0, 0.5).unwrap(), f);
    }
}
