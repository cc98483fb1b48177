//! Path-space metrics, the energy differential, the `k_P` tangent fields and
//! integration by parts under `nu_P^1` and in the limit.

use alloc::format;
use alloc::vec::Vec;
use nalgebra::{DMatrix, DVector};
#[allow(unused_imports)] // inherent float methods shadow these when std is linked
use num_traits::Float as _;

use crate::error::{Error, Result};
use crate::jacobi::{jacobi_chain, SegmentJacobi};
use crate::manifold::{unit, Manifold, Point, Tangent};
use crate::mc::{refinement_sweep, run_replicas, sample_bp, Executor, RateReport, RateRow};
use crate::path::{antidevelop, develop_unrestricted, DrivingPath, GeodesicPath, Partition, PathTangent};
use crate::quadrature::gauss_hermite;

/// Central-difference step for derivatives along vertex flows.
pub const FD_STEP: f64 = 1e-5;

/// Largest `d n` accepted by tensor Gauss-Hermite integration.
pub const MAX_QUADRATURE_DIM: usize = 6;

/// `k: [0, 1] -> R^d` with `k(0) = 0` and piecewise-constant right
/// derivatives on a reference partition.
#[derive(Clone, Debug, PartialEq)]
pub struct DirectionSpec {
    breaks: Partition,
    slopes: Vec<DVector<f64>>,
}

impl DirectionSpec {
    pub fn new(breaks: Partition, slopes: Vec<DVector<f64>>) -> Result<Self> {
        if slopes.len() != breaks.n() {
            return Err(Error::Dimension { expected: breaks.n(), got: slopes.len() });
        }
        let d = slopes[0].len();
        if slopes.iter().any(|v| v.len() != d) {
            return Err(Error::Domain("slopes of different dimensions".into()));
        }
        Ok(DirectionSpec { breaks, slopes })
    }

    /// `k(s) = s v`.
    pub fn constant(v: DVector<f64>) -> Self {
        DirectionSpec { breaks: Partition::uniform(1).expect("one segment"), slopes: alloc::vec![v] }
    }

    pub fn d(&self) -> usize {
        self.slopes[0].len()
    }

    /// `k'(s+)`.
    pub fn derivative_at(&self, s: f64) -> &DVector<f64> {
        &self.slopes[self.breaks.segment_of(s) - 1]
    }

    /// `k(s)`.
    pub fn value_at(&self, s: f64) -> DVector<f64> {
        let t = self.breaks.times();
        let mut acc = DVector::zeros(self.d());
        for i in 1..=self.breaks.n() {
            if t[i - 1] >= s {
                break;
            }
            acc += &self.slopes[i - 1] * (t[i].min(s) - t[i - 1]);
        }
        acc
    }

    /// `sum |k'(s_{i-1}+)| dt_i` over `partition`.
    pub fn norm_1p(&self, partition: &Partition) -> f64 {
        (1..=partition.n())
            .map(|i| self.derivative_at(partition.times()[i - 1]).norm() * partition.dt(i))
            .sum()
    }

    /// Right derivatives at the left end of each segment of `partition`.
    pub fn kicks(&self, partition: &Partition) -> Vec<DVector<f64>> {
        (1..=partition.n()).map(|i| self.derivative_at(partition.times()[i - 1]).clone()).collect()
    }
}

/// `(G^1(X, Y), G^0(X, Y))`.
pub fn g_metrics(sigma: &GeodesicPath, x: &PathTangent, y: &PathTangent) -> Result<(f64, f64)> {
    x.check_base(sigma)?;
    y.check_base(sigma)?;
    let p = sigma.partition();
    let mut g1 = 0.0;
    let mut g0 = 0.0;
    for i in 1..=p.n() {
        g1 += x.hprime[i - 1].dot(&y.hprime[i - 1]) * p.dt(i);
        g0 += x.h[i].dot(&y.h[i]) * p.dt(i);
    }
    Ok((g1, g0))
}

/// Tangent with kick `e_a / sqrt(dt_i)` at `s_{i-1}+` and no other kicks.
pub fn onb_frame<M: Manifold + ?Sized>(m: &M, sigma: &GeodesicPath, i: usize, a: usize) -> Result<PathTangent> {
    let chain = jacobi_chain(m, sigma);
    onb_frame_with(sigma, &chain, i, a)
}

pub fn onb_frame_with(sigma: &GeodesicPath, chain: &[SegmentJacobi], i: usize, a: usize) -> Result<PathTangent> {
    let (n, d) = (sigma.n(), sigma.driving.d());
    if i == 0 || i > n || a >= d {
        return Err(Error::Domain(format!("frame index ({i}, {a}) out of range")));
    }
    let kicks = (1..=n)
        .map(|j| if j == i { unit(d, a) / sigma.partition().dt(i).sqrt() } else { DVector::zeros(d) })
        .collect::<Vec<_>>();
    PathTangent::from_kicks_with(sigma, chain, &kicks)
}

/// `dE(X) = 2 int <sigma', nabla X / ds> ds = 2 sum <db_i / dt_i, h(s_i) - h(s_{i-1})>`.
pub fn de(sigma: &GeodesicPath, x: &PathTangent) -> Result<f64> {
    x.check_base(sigma)?;
    let p = sigma.partition();
    Ok(2.0 * (1..=p.n()).map(|i| (sigma.increment(i) / p.dt(i)).dot(&(&x.h[i] - &x.h[i - 1]))).sum::<f64>())
}

/// The tangent field `X^{k_P}` at `sigma`.
pub fn kp_transport<M: Manifold + ?Sized>(m: &M, sigma: &GeodesicPath, k: &DirectionSpec) -> Result<PathTangent> {
    PathTangent::from_kicks(m, sigma, &k.kicks(sigma.partition()))
}

/// `div X^{k_P} = -sum <k'(s_{i-1}+), db_i>` with `db` from anti-development.
pub fn divergence_nu1<M: Manifold + ?Sized>(m: &M, sigma: &GeodesicPath, k: &DirectionSpec) -> Result<f64> {
    let b = antidevelop(m, sigma)?;
    Ok(-ito_pairing(&b, k))
}

/// `sum <k'(s_{i-1}+), db_i>`.
pub fn ito_pairing(b: &DrivingPath, k: &DirectionSpec) -> f64 {
    let p = b.partition();
    (1..=p.n()).map(|i| k.derivative_at(p.times()[i - 1]).dot(b.increment(i))).sum()
}

/// A function of the vertices `x_0, ..., x_n`.
pub trait VertexFunction: Sync {
    fn eval(&self, vertices: &[Point]) -> f64;

    /// Riemannian gradient with respect to each vertex, when known.
    fn gradient<M: Manifold + ?Sized>(&self, _m: &M, _vertices: &[Point]) -> Option<Vec<Tangent>> {
        None
    }
}

impl<F: Fn(&[Point]) -> f64 + Sync> VertexFunction for F {
    fn eval(&self, vertices: &[Point]) -> f64 {
        self(vertices)
    }
}

/// `F = <x_n, a>` for an ambient vector `a`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearEndpoint {
    pub a: DVector<f64>,
}

impl VertexFunction for LinearEndpoint {
    fn eval(&self, vertices: &[Point]) -> f64 {
        vertices[vertices.len() - 1].dot(&self.a)
    }

    fn gradient<M: Manifold + ?Sized>(&self, m: &M, vertices: &[Point]) -> Option<Vec<Tangent>> {
        let n = vertices.len();
        Some(
            vertices
                .iter()
                .enumerate()
                .map(|(i, x)| if i + 1 == n { m.project_tangent(x, &self.a) } else { DVector::zeros(x.len()) })
                .collect(),
        )
    }
}

/// `d/dt F(exp(x_i, t w_i))` at `t = 0` by central differences.
pub fn flow_derivative<M: Manifold + ?Sized, F: VertexFunction + ?Sized>(
    m: &M,
    f: &F,
    vertices: &[Point],
    dirs: &[Tangent],
    t: f64,
) -> f64 {
    let moved = |sgn: f64| -> Vec<Point> {
        vertices.iter().zip(dirs).map(|(x, w)| m.exp_map_unchecked(x, &(w * (sgn * t)))).collect()
    };
    (f.eval(&moved(1.0)) - f.eval(&moved(-1.0))) / (2.0 * t)
}

/// `X f` for a path tangent `X`, by differences along the vertex flow.
pub fn tangent_derivative<M: Manifold + ?Sized, F: VertexFunction + ?Sized>(
    m: &M,
    f: &F,
    sigma: &GeodesicPath,
    x: &PathTangent,
) -> f64 {
    let dirs: Vec<Tangent> = (0..=sigma.n()).map(|i| x.ambient(sigma, i)).collect();
    flow_derivative(m, f, &sigma.vertices(), &dirs, FD_STEP)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum IbpMode {
    /// Tensor Gauss-Hermite rule of the given order per dimension.
    Quadrature { order: usize },
    MonteCarlo { n_samples: usize, seed: u64 },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IbpResult {
    pub lhs: f64,
    pub rhs: f64,
    pub residual: f64,
    /// Standard error of the residual; zero for quadrature.
    pub se: f64,
}

/// `(X^{k_P} f, f sum <k', db>)` for one driving path.
fn finite_ibp_integrands<M: Manifold + ?Sized, F: VertexFunction + ?Sized>(
    m: &M,
    f: &F,
    k: &DirectionSpec,
    b: &DrivingPath,
) -> (f64, f64) {
    let sigma = develop_unrestricted(m, b);
    let x = PathTangent::from_kicks(m, &sigma, &k.kicks(b.partition())).expect("kicks match the partition");
    let lhs = tangent_derivative(m, f, &sigma, &x);
    let rhs = f.eval(&sigma.vertices()) * ito_pairing(b, k);
    (lhs, rhs)
}

/// Both sides of the finite-dimensional integration by parts formula
/// `int X^{k_P} f dnu_P^1 = int f sum <k'(s_{i-1}+), db_i> dnu_P^1`.
pub fn finite_ibp_check<E, M, F>(
    exec: &E,
    m: &M,
    partition: &Partition,
    f: &F,
    k: &DirectionSpec,
    mode: IbpMode,
) -> Result<IbpResult>
where
    E: Executor,
    M: Manifold + ?Sized,
    F: VertexFunction + ?Sized,
{
    let d = m.dim();
    let n = partition.n();
    match mode {
        IbpMode::Quadrature { order } => {
            if d * n > MAX_QUADRATURE_DIM {
                return Err(Error::Domain(format!(
                    "quadrature needs d n <= {MAX_QUADRATURE_DIM}, got {}",
                    d * n
                )));
            }
            let (nodes, weights) = gauss_hermite(order);
            let dim = d * n;
            let total = order.pow(dim as u32);
            let chunk = order.pow(dim.min(2) as u32);
            let n_chunks = total.div_ceil(chunk);
            let parts = exec.map_blocks(n_chunks, |c| {
                let (mut l, mut r) = (0.0, 0.0);
                for idx in c * chunk..((c + 1) * chunk).min(total) {
                    let mut rem = idx;
                    let mut w = 1.0;
                    let mut incs = Vec::with_capacity(n);
                    for i in 1..=n {
                        let sd = partition.dt(i).sqrt();
                        let mut v = DVector::zeros(d);
                        for a in 0..d {
                            let j = rem % order;
                            rem /= order;
                            v[a] = nodes[j] * sd;
                            w *= weights[j];
                        }
                        incs.push(v);
                    }
                    let b = DrivingPath::new(partition.clone(), incs).expect("sizes match");
                    let (li, ri) = finite_ibp_integrands(m, f, k, &b);
                    l += w * li;
                    r += w * ri;
                }
                (l, r)
            });
            let lhs: f64 = parts.iter().map(|p| p.0).sum();
            let rhs: f64 = parts.iter().map(|p| p.1).sum();
            Ok(IbpResult { lhs, rhs, residual: lhs - rhs, se: 0.0 })
        }
        IbpMode::MonteCarlo { n_samples, seed } => {
            let est = run_replicas(exec, n_samples, 3, seed, |rng, out, _| {
                let b = sample_bp(partition, d, rng);
                let (l, r) = finite_ibp_integrands(m, f, k, &b);
                out[0] = l;
                out[1] = r;
                out[2] = l - r;
            });
            Ok(IbpResult { lhs: est[0].mean, rhs: est[1].mean, residual: est[2].mean, se: est[2].std_error })
        }
    }
}

/// Values `z(s_i)` of the solution of `z' + Ric_{u(s)} z / 2 = k'`, `z(0) = 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct ZField {
    pub values: Vec<DVector<f64>>,
}

/// Implicit midpoint rule with `Ric` frozen at each segment's midpoint frame.
pub fn z_field<M: Manifold + ?Sized>(m: &M, sigma: &GeodesicPath, k: &DirectionSpec) -> ZField {
    let p = sigma.partition();
    let d = m.dim();
    let mut z = DVector::zeros(d);
    let mut values = Vec::with_capacity(p.n() + 1);
    values.push(z.clone());
    let id = DMatrix::<f64>::identity(d, d);
    let constant_ric = m.constant_curvature().map(|_| m.ricci_frame(&sigma.frames[0]));
    for i in 1..=p.n() {
        let dt = p.dt(i);
        let ric = match &constant_ric {
            Some(r) => r.clone(),
            None => m.ricci_frame(&sigma.frame_at(m, i, dt / 2.0)),
        };
        let kp = k.derivative_at(p.times()[i - 1]);
        let lhs = &id + &ric * (dt / 4.0);
        let rhs = (&id - &ric * (dt / 4.0)) * &z + kp * dt;
        z = lhs.lu().solve(&rhs).expect("I + dt Ric / 4 is invertible for small dt");
        values.push(z.clone());
    }
    ZField { values }
}

/// Exact `z(s)` when `Ric = c I` along the path.
pub fn z_constant_ricci(c: f64, k: &DirectionSpec, s: f64) -> DVector<f64> {
    let t = k.breaks.times();
    let mut acc = DVector::zeros(k.d());
    for i in 1..=k.breaks.n() {
        let (a, b) = (t[i - 1], t[i].min(s));
        if a >= s {
            break;
        }
        // int_a^b e^{-c (s - r) / 2} dr
        let w = if c == 0.0 {
            b - a
        } else {
            2.0 / c * ((-c * (s - b) / 2.0).exp() - (-c * (s - a) / 2.0).exp())
        };
        acc += &k.slopes[i - 1] * w;
    }
    acc
}

/// Both sides of the limiting formula `E[X^z f] = E[f sum <k', dB>]` on a
/// fine partition, with common random numbers.
pub fn limit_ibp_check<E, M, F>(
    exec: &E,
    m: &M,
    fine: &Partition,
    f: &F,
    k: &DirectionSpec,
    n_samples: usize,
    seed: u64,
) -> IbpResult
where
    E: Executor,
    M: Manifold + ?Sized,
    F: VertexFunction + ?Sized,
{
    let est = run_replicas(exec, n_samples, 3, seed, |rng, out, _| {
        let b = sample_bp(fine, m.dim(), rng);
        let sigma = develop_unrestricted(m, &b);
        let z = z_field(m, &sigma, k);
        let vertices = sigma.vertices();
        let dirs: Vec<Tangent> = sigma.frames.iter().zip(&z.values).map(|(u, zi)| u.apply(zi)).collect();
        let l = match f.gradient(m, &vertices) {
            Some(grad) => grad.iter().zip(&dirs).map(|(g, w)| g.dot(w)).sum(),
            None => flow_derivative(m, f, &vertices, &dirs, FD_STEP),
        };
        let r = f.eval(&vertices) * ito_pairing(&b, k);
        out[0] = l;
        out[1] = r;
        out[2] = l - r;
    });
    IbpResult { lhs: est[0].mean, rhs: est[1].mean, residual: est[2].mean, se: est[2].std_error }
}

/// `E sup_i |h(s_i) - z(s_i)|` for `X^{k_P}` on uniform partitions against
/// the exact `z` of a constant-curvature model, sharing one skeleton.
pub fn kz_convergence<E: Executor, M: Manifold + ?Sized>(
    exec: &E,
    m: &M,
    k: &DirectionSpec,
    n_list: &[usize],
    n_samples: usize,
    seed: u64,
) -> Result<RateReport> {
    let kc = m
        .constant_curvature()
        .ok_or_else(|| Error::Capability("closed-form z needs constant curvature".into()))?;
    let c = kc * (m.dim() as f64 - 1.0);
    let levels = n_list.iter().map(|&n| Partition::uniform(n)).collect::<Result<Vec<_>>>()?;
    let fine = Partition::uniform(crate::mc::lcm_all(n_list))?;
    let exact: Vec<Vec<DVector<f64>>> =
        levels.iter().map(|l| l.times().iter().map(|&s| z_constant_ricci(c, k, s)).collect()).collect();
    let est = refinement_sweep(exec, &fine, &levels, m.dim(), n_samples, seed, |j, b| {
        let sigma = develop_unrestricted(m, b);
        let x = kp_transport(m, &sigma, k).expect("kicks match the partition");
        let sup = x.h.iter().zip(&exact[j]).map(|(h, z)| (h - z).norm()).fold(0.0, f64::max);
        (sup, false)
    })?;
    let rows = n_list
        .iter()
        .zip(&est)
        .map(|(&n, e)| RateRow { n, mesh: 1.0 / n as f64, error: e.mean, std_error: e.std_error })
        .collect();
    Ok(RateReport::from_rows(rows))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg;
    use crate::manifold::{Flat, Sphere};
    use crate::mc::Serial;
    use crate::path::{develop, e_p_vertices};
    use crate::rng::RngStream;
    use alloc::vec;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(xs)
    }

    fn random_path<M: Manifold>(m: &M, n: usize, seed: u64) -> GeodesicPath {
        let p = Partition::uniform(n).unwrap();
        let mut rng = RngStream::new(seed, 0);
        develop(m, &sample_bp(&p, m.dim(), &mut rng)).unwrap()
    }

    #[test]
    fn direction_spec_values() {
        let k = DirectionSpec::new(Partition::new(vec![0.0, 0.5, 1.0]).unwrap(), vec![v(&[1.0, 0.0]), v(&[0.0, 2.0])]).unwrap();
        assert_eq!(k.derivative_at(0.5), &v(&[0.0, 2.0]));
        assert!((k.value_at(0.75) - v(&[0.5, 0.5])).norm() < 1e-15);
        assert!((k.norm_1p(&Partition::uniform(4).unwrap()) - 1.5).abs() < 1e-15);
    }

    #[test]
    fn flat_tangents() {
        let m = Flat::new(2);
        let sigma = random_path(&m, 4, 1);
        let x = onb_frame(&m, &sigma, 2, 1).unwrap();
        for j in 0..=4 {
            let s = j as f64 / 4.0;
            let expect = (s.min(0.5) - 0.25).max(0.0) / 0.5;
            assert!((&x.h[j] - v(&[0.0, expect])).norm() < 1e-15);
        }
        let k = DirectionSpec::constant(v(&[1.0, 0.0]));
        let xk = kp_transport(&m, &sigma, &k).unwrap();
        let (g1, _) = g_metrics(&sigma, &xk, &xk).unwrap();
        assert!((g1 - 1.0).abs() < 1e-15);
        let zero = PathTangent::from_kicks(&m, &sigma, &vec![DVector::zeros(2); 4]).unwrap();
        assert_eq!(g_metrics(&sigma, &zero, &zero).unwrap(), (0.0, 0.0));
        assert_eq!(de(&sigma, &zero).unwrap(), 0.0);
        let expected: f64 = 2.0 * sigma.driving.increments().iter().map(|db| db[0]).sum::<f64>();
        assert!((de(&sigma, &xk).unwrap() - expected).abs() < 1e-14);
    }

    #[test]
    fn flat_divergence_example() {
        let m = Flat::new(2);
        let b = DrivingPath::new(Partition::uniform(1).unwrap(), vec![v(&[2.0, 0.0])]).unwrap();
        let sigma = develop(&m, &b).unwrap();
        let k = DirectionSpec::constant(v(&[1.0, 0.0]));
        assert_eq!(divergence_nu1(&m, &sigma, &k).unwrap(), -2.0);
    }

    #[test]
    fn onb_frame_is_orthonormal_on_sphere() {
        let m = Sphere::new(2);
        for seed in 0..5 {
            let sigma = random_path(&m, 4, seed);
            let chain = jacobi_chain(&m, &sigma);
            let frame: Vec<PathTangent> =
                (1..=4).flat_map(|i| (0..2).map(move |a| (i, a))).map(|(i, a)| onb_frame_with(&sigma, &chain, i, a).unwrap()).collect();
            let mut gram = DMatrix::zeros(8, 8);
            for (p, x) in frame.iter().enumerate() {
                for (q, y) in frame.iter().enumerate() {
                    gram[(p, q)] = g_metrics(&sigma, x, y).unwrap().0;
                }
            }
            assert!((&gram - DMatrix::identity(8, 8)).amax() < 1e-8);
            for (p, x) in frame.iter().enumerate() {
                let i = p / 2 + 1;
                assert!(x.h[..i].iter().all(|h| h.norm() == 0.0));
            }
        }
    }

    #[test]
    fn de_matches_energy_differences_and_divergence() {
        let m = Sphere::new(2);
        let sigma = random_path(&m, 6, 3);
        let k = DirectionSpec::new(Partition::new(vec![0.0, 0.4, 1.0]).unwrap(), vec![v(&[0.7, -0.2]), v(&[-0.3, 1.1])]).unwrap();
        let x = kp_transport(&m, &sigma, &k).unwrap();
        let t = 1e-5;
        let energy = |sgn: f64| {
            let moved: Vec<Point> = (0..=6).map(|i| m.exp_map_unchecked(sigma.vertex(i), &(x.ambient(&sigma, i) * (sgn * t)))).collect();
            e_p_vertices(&m, sigma.partition(), &moved).unwrap()
        };
        let fd = (energy(1.0) - energy(-1.0)) / (2.0 * t);
        let de_x = de(&sigma, &x).unwrap();
        assert!((fd - de_x).abs() < 1e-4, "{fd} vs {de_x}");
        let pairing = 2.0 * ito_pairing(&sigma.driving, &k);
        assert!((de_x - pairing).abs() < 1e-12);
        assert!((divergence_nu1(&m, &sigma, &k).unwrap() + de_x / 2.0).abs() < 1e-9);
    }

    #[test]
    fn transport_bounds_and_closed_form() {
        let m = Sphere::new(2);
        let k = DirectionSpec::constant(v(&[1.0, 0.0]));
        for seed in 0..10 {
            let sigma = random_path(&m, 8, seed);
            let x = kp_transport(&m, &sigma, &k).unwrap();
            let energy: f64 = sigma.driving.increments().iter().map(|db| db.norm_squared()).sum();
            let bound = k.norm_1p(sigma.partition()) * (0.5 * m.curvature_bound() * energy).exp();
            assert!(x.h.iter().all(|h| h.norm() <= bound + 1e-12));
        }
        let b = DrivingPath::new(Partition::uniform(1).unwrap(), vec![v(&[0.8, 0.0])]).unwrap();
        let sigma = develop(&m, &b).unwrap();
        let x = kp_transport(&m, &sigma, &k).unwrap();
        assert!((x.h[1][0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn z_field_matches_closed_form() {
        let m = Sphere::new(2);
        let k = DirectionSpec::constant(v(&[1.0, 0.0]));
        let z1 = z_constant_ricci(1.0, &k, 1.0);
        assert!((z1[0] - 2.0 * (1.0 - (-0.5f64).exp())).abs() < 1e-15);
        let sigma = random_path(&m, 200, 2);
        let z = z_field(&m, &sigma, &k);
        assert!((&z.values[200] - z1).norm() < 1e-5);
        let flat = Flat::new(2);
        let sigma = random_path(&flat, 10, 2);
        let z = z_field(&flat, &sigma, &k);
        for (i, zi) in z.values.iter().enumerate() {
            assert!((zi - k.value_at(i as f64 / 10.0)).norm() < 1e-14);
        }
    }

    #[test]
    fn finite_ibp_quadrature_single_segment_sphere() {
        let m = Sphere::new(2);
        let p = Partition::uniform(1).unwrap();
        let f = LinearEndpoint { a: v(&[0.0, 0.0, 1.0]) };
        let k = DirectionSpec::constant(v(&[1.0, 0.0]));
        let r = finite_ibp_check(&Serial, &m, &p, &f, &k, IbpMode::Quadrature { order: 20 }).unwrap();
        assert!(r.residual.abs() <= 1e-6 * r.lhs.abs().max(1.0), "{r:?}");
        let g = LinearEndpoint { a: v(&[0.3, -0.5, 0.8]) };
        let r = finite_ibp_check(&Serial, &m, &p, &g, &k, IbpMode::Quadrature { order: 20 }).unwrap();
        assert!(r.lhs.abs() > 1e-3);
        assert!(r.residual.abs() <= 1e-6 * r.lhs.abs().max(1.0), "{r:?}");
    }

    #[test]
    fn finite_ibp_quadrature_flat_is_classical() {
        let m = Flat::new(2);
        let p = Partition::new(vec![0.0, 0.3, 1.0]).unwrap();
        let f = |xs: &[Point]| xs[2][0] + 0.3 * xs[1][1] * xs[1][1] - xs[1][0] * xs[2][1];
        let k = DirectionSpec::new(Partition::new(vec![0.0, 0.3, 1.0]).unwrap(), vec![v(&[1.0, 0.5]), v(&[-0.4, 2.0])]).unwrap();
        let r = finite_ibp_check(&Serial, &m, &p, &f, &k, IbpMode::Quadrature { order: 20 }).unwrap();
        assert!(r.residual.abs() <= 1e-10, "{r:?}");
        let big = Partition::uniform(4).unwrap();
        assert!(finite_ibp_check(&Serial, &m, &big, &f, &k, IbpMode::Quadrature { order: 20 }).is_err());
    }

    #[test]
    fn finite_ibp_monte_carlo_sphere() {
        let m = Sphere::new(2);
        let p = Partition::uniform(8).unwrap();
        let f = LinearEndpoint { a: v(&[0.3, -0.5, 0.8]) };
        let k = DirectionSpec::constant(v(&[1.0, 0.4]));
        let r = finite_ibp_check(&Serial, &m, &p, &f, &k, IbpMode::MonteCarlo { n_samples: 20_000, seed: 5 }).unwrap();
        assert!(r.residual.abs() <= 3.0 * r.se, "{r:?}");
    }

    #[test]
    fn limit_ibp_flat_and_zero_direction() {
        let m = Flat::new(2);
        let p = Partition::uniform(10).unwrap();
        let f = LinearEndpoint { a: v(&[0.5, -1.0]) };
        let k = DirectionSpec::new(Partition::new(vec![0.0, 0.5, 1.0]).unwrap(), vec![v(&[1.0, 0.0]), v(&[0.3, 1.0])]).unwrap();
        let r = limit_ibp_check(&Serial, &m, &p, &f, &k, 20_000, 3);
        assert!((r.lhs - k.value_at(1.0).dot(&f.a)).abs() < 1e-12);
        assert!(r.residual.abs() <= 3.0 * r.se, "{r:?}");
        let zero = DirectionSpec::constant(v(&[0.0, 0.0]));
        let r = limit_ibp_check(&Serial, &Sphere::new(2), &p, &LinearEndpoint { a: v(&[0.0, 0.0, 1.0]) }, &zero, 100, 3);
        assert_eq!((r.lhs, r.rhs), (0.0, 0.0));
    }

    #[test]
    fn g1_gram_of_pushforward_basis_is_unimodular() {
        // Pushforwards of the unit kicks of H_P(R^d), measured with G^1.
        let m = Sphere::new(2);
        let sigma = random_path(&m, 3, 7);
        let chain = jacobi_chain(&m, &sigma);
        let mut basis = Vec::new();
        for i in 1..=3 {
            for a in 0..2 {
                basis.push(onb_frame_with(&sigma, &chain, i, a).unwrap());
            }
        }
        let mut gram = DMatrix::zeros(6, 6);
        for p in 0..6 {
            for q in 0..6 {
                gram[(p, q)] = g_metrics(&sigma, &basis[p], &basis[q]).unwrap().0;
            }
        }
        let eig = gram.clone().symmetric_eigenvalues();
        let cond = eig.max() / eig.min();
        assert!(cond < 1e6);
        assert!((linalg::det(&gram) - 1.0).abs() < 1e-10);
    }

    #[test]
    fn kz_rate_is_positive() {
        let m = Sphere::new(2);
        let k = DirectionSpec::constant(v(&[1.0, 0.0]));
        let r = kz_convergence(&Serial, &m, &k, &[8, 16, 32, 64], 2000, 4).unwrap();
        assert!(r.slope.unwrap() > 0.3, "{r:?}");
    }
}
