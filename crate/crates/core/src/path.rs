//! Partitions, driving paths in `R^d`, piecewise-geodesic paths and their
//! tangent vectors.

use alloc::format;
use alloc::vec::Vec;
use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::jacobi::{jacobi_chain, segment_jacobi, SegmentJacobi};
use crate::manifold::{Frame, Manifold, Point};
use crate::quadrature;

/// A partition `0 = s_0 < s_1 < ... < s_n = 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct Partition {
    times: Vec<f64>,
}

impl Partition {
    pub fn new(times: Vec<f64>) -> Result<Self> {
        if times.len() < 2 {
            return Err(Error::InvalidPartition("need at least one segment".into()));
        }
        if times[0] != 0.0 || times[times.len() - 1] != 1.0 {
            return Err(Error::InvalidPartition("must start at 0 and end at 1".into()));
        }
        for (i, w) in times.windows(2).enumerate() {
            if w[1].is_nan() || w[1] <= w[0] {
                return Err(Error::InvalidPartition(format!(
                    "times not strictly increasing at index {}",
                    i + 1
                )));
            }
        }
        Ok(Partition { times })
    }

    pub fn uniform(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidPartition("need at least one segment".into()));
        }
        Partition::new((0..=n).map(|i| i as f64 / n as f64).collect())
    }

    /// Number of segments.
    pub fn n(&self) -> usize {
        self.times.len() - 1
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    /// `s_i - s_{i-1}` for `i in 1..=n`.
    pub fn dt(&self, i: usize) -> f64 {
        self.times[i] - self.times[i - 1]
    }

    pub fn mesh(&self) -> f64 {
        self.times.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max)
    }

    /// Segment `i` (1-based) with `s in [s_{i-1}, s_i)`; the last segment is closed.
    pub fn segment_of(&self, s: f64) -> usize {
        let n = self.n();
        let idx = self.times.partition_point(|&t| t <= s);
        idx.clamp(1, n)
    }

    /// Positions of the coarse times inside `self`, if `self` refines `coarse`.
    pub fn refinement_indices(&self, coarse: &Partition) -> Option<Vec<usize>> {
        let mut out = Vec::with_capacity(coarse.times.len());
        let mut j = 0;
        for &t in &coarse.times {
            while j < self.times.len() && self.times[j] < t {
                j += 1;
            }
            if j == self.times.len() || self.times[j] != t {
                return None;
            }
            out.push(j);
        }
        Some(out)
    }
}

/// A driving path in `H_P(R^d)`, stored as its increments.
#[derive(Clone, Debug, PartialEq)]
pub struct DrivingPath {
    partition: Partition,
    increments: Vec<DVector<f64>>,
}

impl DrivingPath {
    pub fn new(partition: Partition, increments: Vec<DVector<f64>>) -> Result<Self> {
        if increments.len() != partition.n() {
            return Err(Error::Dimension { expected: partition.n(), got: increments.len() });
        }
        if let Some(first) = increments.first() {
            let d = first.len();
            if let Some(bad) = increments.iter().find(|b| b.len() != d) {
                return Err(Error::Dimension { expected: d, got: bad.len() });
            }
        }
        Ok(DrivingPath { partition, increments })
    }

    pub fn zero(partition: Partition, d: usize) -> Self {
        let n = partition.n();
        DrivingPath { partition, increments: alloc::vec![DVector::zeros(d); n] }
    }

    pub fn partition(&self) -> &Partition {
        &self.partition
    }

    pub fn increments(&self) -> &[DVector<f64>] {
        &self.increments
    }

    /// `b(s_i) - b(s_{i-1})` for `i in 1..=n`.
    pub fn increment(&self, i: usize) -> &DVector<f64> {
        &self.increments[i - 1]
    }

    pub fn d(&self) -> usize {
        self.increments[0].len()
    }

    /// `b(s_0), ..., b(s_n)`.
    pub fn values(&self) -> Vec<DVector<f64>> {
        let mut out = Vec::with_capacity(self.increments.len() + 1);
        let mut acc = DVector::zeros(self.d());
        out.push(acc.clone());
        for db in &self.increments {
            acc += db;
            out.push(acc.clone());
        }
        out
    }

    /// `sum |db_i|^2 / dt_i`.
    pub fn energy(&self) -> f64 {
        self.increments
            .iter()
            .enumerate()
            .map(|(k, db)| db.norm_squared() / self.partition.dt(k + 1))
            .sum()
    }

    /// Restriction to a coarser partition (sums of increments).
    pub fn aggregate(&self, coarse: &Partition) -> Result<DrivingPath> {
        let idx = self
            .partition
            .refinement_indices(coarse)
            .ok_or_else(|| Error::InvalidPartition("not a refinement of the target partition".into()))?;
        let incs = idx
            .windows(2)
            .map(|w| {
                let mut acc = DVector::zeros(self.d());
                for db in &self.increments[w[0]..w[1]] {
                    acc += db;
                }
                acc
            })
            .collect();
        DrivingPath::new(coarse.clone(), incs)
    }
}

/// A piecewise-geodesic path together with its parallel frames `u(s_i)`.
#[derive(Clone, Debug, PartialEq)]
pub struct GeodesicPath {
    pub driving: DrivingPath,
    pub frames: Vec<Frame>,
}

impl GeodesicPath {
    pub fn partition(&self) -> &Partition {
        &self.driving.partition
    }

    pub fn n(&self) -> usize {
        self.driving.partition.n()
    }

    pub fn vertex(&self, i: usize) -> &Point {
        &self.frames[i].point
    }

    /// `x_0, ..., x_n`.
    pub fn vertices(&self) -> Vec<Point> {
        self.frames.iter().map(|f| f.point.clone()).collect()
    }

    pub fn endpoint(&self) -> &Point {
        &self.frames[self.n()].point
    }

    pub fn increment(&self, i: usize) -> &DVector<f64> {
        self.driving.increment(i)
    }

    /// Ambient velocity on segment `i`, at its left end.
    pub fn velocity(&self, i: usize) -> DVector<f64> {
        self.frames[i - 1].apply(self.increment(i)) / self.partition().dt(i)
    }

    /// `int |sigma'|^2 ds`, from the ambient segment velocities.
    pub fn energy(&self) -> f64 {
        (1..=self.n())
            .map(|i| self.frames[i - 1].apply(self.increment(i)).norm_squared() / self.partition().dt(i))
            .sum()
    }

    /// Cheap identity tag used to match tangent vectors to their base path.
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut eat = |x: f64| {
            h ^= x.to_bits();
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        };
        for &t in self.partition().times() {
            eat(t);
        }
        for f in &self.frames {
            for &x in f.point.iter() {
                eat(x);
            }
        }
        h
    }

    /// Frame `u(s_{i-1} + tau)` on segment `i`.
    pub fn frame_at<M: Manifold + ?Sized>(&self, m: &M, i: usize, tau: f64) -> Frame {
        let u = &self.frames[i - 1];
        if tau == 0.0 {
            return u.clone();
        }
        let frac = tau / self.partition().dt(i);
        m.transport_frame(u, &u.apply(&(self.increment(i) * frac)))
    }
}

/// Development `sigma' = //_s b'` of a driving path. Fails when an increment
/// reaches the injectivity radius.
pub fn develop<M: Manifold + ?Sized>(m: &M, b: &DrivingPath) -> Result<GeodesicPath> {
    let radius = m.injectivity_radius();
    for (k, db) in b.increments.iter().enumerate() {
        let norm = db.norm();
        if norm >= radius {
            return Err(Error::DevelopmentRange { segment: k + 1, norm, radius });
        }
    }
    if b.d() != m.dim() {
        return Err(Error::Dimension { expected: m.dim(), got: b.d() });
    }
    Ok(develop_unrestricted(m, b))
}

/// Development without the injectivity-radius check. Samplers and
/// quadrature rules need increments of any size; segments past a conjugate
/// point then show up as degenerate densities.
pub fn develop_unrestricted<M: Manifold + ?Sized>(m: &M, b: &DrivingPath) -> GeodesicPath {
    let mut frames = Vec::with_capacity(b.increments.len() + 1);
    let mut u = m.base_frame();
    for db in &b.increments {
        let next = m.transport_frame(&u, &u.apply(db));
        frames.push(u);
        u = next;
    }
    frames.push(u);
    GeodesicPath { driving: b.clone(), frames }
}

/// Inverse of `develop`: reads increments off the vertices `x_0, ..., x_n`.
pub fn antidevelop_vertices<M: Manifold + ?Sized>(
    m: &M,
    partition: &Partition,
    vertices: &[Point],
) -> Result<DrivingPath> {
    if vertices.len() != partition.n() + 1 {
        return Err(Error::Dimension { expected: partition.n() + 1, got: vertices.len() });
    }
    let mut u = m.base_frame();
    if (&vertices[0] - &u.point).norm() > 1e-12 {
        return Err(Error::Domain("path does not start at the base point".into()));
    }
    let mut incs = Vec::with_capacity(partition.n());
    for w in vertices.windows(2) {
        let v = m.log_map(&u.point, &w[1])?;
        incs.push(u.coords(&v));
        u = m.transport_frame(&u, &v);
        u.point = w[1].clone();
    }
    DrivingPath::new(partition.clone(), incs)
}

pub fn antidevelop<M: Manifold + ?Sized>(m: &M, sigma: &GeodesicPath) -> Result<DrivingPath> {
    antidevelop_vertices(m, sigma.partition(), &sigma.vertices())
}

/// `E_P(x_1, ..., x_n) = sum d(x_{i-1}, x_i)^2 / dt_i` for `x_0, ..., x_n`.
pub fn e_p_vertices<M: Manifold + ?Sized>(m: &M, partition: &Partition, vertices: &[Point]) -> Result<f64> {
    if vertices.len() != partition.n() + 1 {
        return Err(Error::Dimension { expected: partition.n() + 1, got: vertices.len() });
    }
    let mut e = 0.0;
    for (k, w) in vertices.windows(2).enumerate() {
        let dist = m.distance(&w[0], &w[1])?;
        e += dist * dist / partition.dt(k + 1);
    }
    Ok(e)
}

/// Tangent vector to `H_P(M)` at a path, in frame coordinates: `h(s_i) =
/// u(s_i)^{-1} X(s_i)` and the right derivatives `h'(s_{i-1}+)`.
#[derive(Clone, Debug, PartialEq)]
pub struct PathTangent {
    pub fingerprint: u64,
    pub h: Vec<DVector<f64>>,
    pub hprime: Vec<DVector<f64>>,
}

impl PathTangent {
    /// Builds the tangent with `h(0) = 0` and the given right derivatives.
    pub fn from_kicks<M: Manifold + ?Sized>(m: &M, sigma: &GeodesicPath, kicks: &[DVector<f64>]) -> Result<Self> {
        let chain = jacobi_chain(m, sigma);
        Self::from_kicks_with(sigma, &chain, kicks)
    }

    pub fn from_kicks_with(sigma: &GeodesicPath, chain: &[SegmentJacobi], kicks: &[DVector<f64>]) -> Result<Self> {
        let n = sigma.n();
        if kicks.len() != n {
            return Err(Error::Dimension { expected: n, got: kicks.len() });
        }
        let d = sigma.driving.d();
        let mut h = Vec::with_capacity(n + 1);
        h.push(DVector::zeros(d));
        for i in 1..=n {
            let next = chain[i - 1].propagate(&h[i - 1], &kicks[i - 1]);
            h.push(next);
        }
        Ok(PathTangent { fingerprint: sigma.fingerprint(), h, hprime: kicks.to_vec() })
    }

    /// Builds the tangent from its values at the partition points, solving
    /// for the right derivatives.
    pub fn from_values<M: Manifold + ?Sized>(m: &M, sigma: &GeodesicPath, h: Vec<DVector<f64>>) -> Result<Self> {
        let n = sigma.n();
        if h.len() != n + 1 {
            return Err(Error::Dimension { expected: n + 1, got: h.len() });
        }
        let chain = jacobi_chain(m, sigma);
        let mut hprime = Vec::with_capacity(n);
        for i in 1..=n {
            let j = &chain[i - 1];
            let rhs = &h[i] - &j.c * &h[i - 1];
            let sol = j
                .z
                .clone()
                .lu()
                .solve(&rhs)
                .ok_or_else(|| Error::Numerical(format!("singular Jacobi matrix on segment {i}")))?;
            hprime.push(sol);
        }
        Ok(PathTangent { fingerprint: sigma.fingerprint(), h, hprime })
    }

    /// `X(s_i)` in ambient coordinates.
    pub fn ambient(&self, sigma: &GeodesicPath, i: usize) -> DVector<f64> {
        sigma.frames[i].apply(&self.h[i])
    }

    /// `h(s_{i-1} + tau)` inside segment `i`.
    pub fn value_in_segment<M: Manifold + ?Sized>(&self, m: &M, sigma: &GeodesicPath, i: usize, tau: f64) -> DVector<f64> {
        if tau == 0.0 {
            return self.h[i - 1].clone();
        }
        let dt = sigma.partition().dt(i);
        let j = segment_jacobi(m, &sigma.frames[i - 1], &(sigma.increment(i) * (tau / dt)), tau);
        j.propagate(&self.h[i - 1], &self.hprime[i - 1])
    }

    pub fn check_base(&self, sigma: &GeodesicPath) -> Result<()> {
        if self.fingerprint != sigma.fingerprint() {
            return Err(Error::Domain("tangent vector belongs to a different path".into()));
        }
        Ok(())
    }
}

/// Number of Gauss-Legendre nodes per segment for the curvature integrals.
pub const SEGMENT_QUADRATURE: usize = 5;

/// `Omega_{u(r)}(b'(r), h(r))` at time `s_{i-1} + tau`.
fn omega_integrand<M: Manifold + ?Sized>(m: &M, sigma: &GeodesicPath, x: &PathTangent, i: usize, tau: f64) -> DMatrix<f64> {
    let dt = sigma.partition().dt(i);
    let bp = sigma.increment(i) / dt;
    let h = x.value_in_segment(m, sigma, i, tau);
    let u = if m.constant_curvature().is_some() { sigma.frames[i - 1].clone() } else { sigma.frame_at(m, i, tau) };
    m.curvature_omega(&u, &bp, &h)
}

/// `q_s(X) = int_0^s Omega_{u(r)}(b'(r), h(r)) dr`.
pub fn q_form<M: Manifold + ?Sized>(m: &M, sigma: &GeodesicPath, x: &PathTangent, s: f64) -> Result<DMatrix<f64>> {
    x.check_base(sigma)?;
    let d = m.dim();
    let p = sigma.partition();
    let (nodes, weights) = quadrature::gauss_legendre(SEGMENT_QUADRATURE);
    let mut q = DMatrix::zeros(d, d);
    for i in 1..=p.n() {
        let a = p.times()[i - 1];
        if a >= s {
            break;
        }
        let len = (p.times()[i].min(s)) - a;
        for (t, w) in nodes.iter().zip(weights.iter()) {
            let tau = 0.5 * len * (t + 1.0);
            q += omega_integrand(m, sigma, x, i, tau) * (0.5 * len * w);
        }
    }
    Ok(q)
}

/// Pull-back `phi^{-1}_* X` evaluated at the partition points:
/// `h(s) - int_0^s q_r(X) b'(r) dr`.
pub fn pullback_differential<M: Manifold + ?Sized>(
    m: &M,
    sigma: &GeodesicPath,
    x: &PathTangent,
) -> Result<Vec<DVector<f64>>> {
    x.check_base(sigma)?;
    let d = m.dim();
    let p = sigma.partition();
    let (nodes, weights) = quadrature::gauss_legendre(SEGMENT_QUADRATURE);
    let mut out = Vec::with_capacity(p.n() + 1);
    out.push(x.h[0].clone());
    let mut q = DMatrix::zeros(d, d);
    let mut drift = DVector::zeros(d);
    for i in 1..=p.n() {
        let dt = p.dt(i);
        let bp = sigma.increment(i) / dt;
        // int_J q_r dr = dt q_{s_{i-1}} + int_J (s_i - t) Omega(t) dt
        let mut q_int = &q * dt;
        let mut q_inc = DMatrix::zeros(d, d);
        for (t, w) in nodes.iter().zip(weights.iter()) {
            let tau = 0.5 * dt * (t + 1.0);
            let om = omega_integrand(m, sigma, x, i, tau);
            q_int += &om * (0.5 * dt * w * (dt - tau));
            q_inc += om * (0.5 * dt * w);
        }
        drift += q_int * &bp;
        q += q_inc;
        out.push(&x.h[i] - &drift);
    }
    Ok(out)
}
