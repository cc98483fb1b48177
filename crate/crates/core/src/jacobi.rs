//! Segment Jacobi matrices and the path density `rho_P`.

use alloc::vec::Vec;
#[allow(unused_imports)] // inherent float methods shadow these when std is linked
use num_traits::Float as _;
use nalgebra::{DMatrix, DVector};

use crate::linalg;
use crate::manifold::{Frame, Manifold};
use crate::path::GeodesicPath;

/// Default RK4 step for manifolds without closed-form Jacobi fields.
pub const RK4_STEP: f64 = 1e-3;

/// Jacobi matrices of one segment: `Z` solves `Z'' = A Z`, `Z(0) = 0`,
/// `Z'(0) = I` and `C` solves the same ODE with `C(0) = I`, `C'(0) = 0`,
/// both evaluated at the end of the segment.
#[derive(Clone, Debug, PartialEq)]
pub struct SegmentJacobi {
    pub z: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub dt: f64,
}

impl SegmentJacobi {
    /// `h(s_i) = C h(s_{i-1}) + Z h'(s_{i-1}+)`.
    pub fn propagate(&self, h: &DVector<f64>, hprime: &DVector<f64>) -> DVector<f64> {
        &self.c * h + &self.z * hprime
    }
}

/// Jacobi matrices for the segment starting at frame `u` with increment `db`
/// over a time step `dt`.
pub fn segment_jacobi<M: Manifold + ?Sized>(m: &M, u: &Frame, db: &DVector<f64>, dt: f64) -> SegmentJacobi {
    match m.constant_curvature() {
        Some(k) => segment_jacobi_constant(k, db, dt),
        None => segment_jacobi_rk4(m, u, db, dt, RK4_STEP.min(dt)),
    }
}

/// Closed form for constant sectional curvature `k`.
pub fn segment_jacobi_constant(k: f64, db: &DVector<f64>, dt: f64) -> SegmentJacobi {
    let d = db.len();
    let r = db.norm();
    if k == 0.0 || r == 0.0 {
        return SegmentJacobi {
            z: DMatrix::identity(d, d) * dt,
            c: DMatrix::identity(d, d),
            dt,
        };
    }
    let x = k.abs().sqrt() * r;
    let (sn, cs) = if k > 0.0 { (x.sin() / x, x.cos()) } else { (x.sinh() / x, x.cosh()) };
    let mut z = DMatrix::zeros(d, d);
    let mut c = DMatrix::zeros(d, d);
    for a in 0..d {
        for b in 0..d {
            let p = db[a] * db[b] / (r * r);
            let id = if a == b { 1.0 } else { 0.0 };
            z[(a, b)] = dt * sn * id + (dt - dt * sn) * p;
            c[(a, b)] = cs * id + (1.0 - cs) * p;
        }
    }
    SegmentJacobi { z, c, dt }
}

/// `A = Omega_u(b', .) b'` as a matrix.
fn jacobi_operator<M: Manifold + ?Sized>(m: &M, u: &Frame, bp: &DVector<f64>) -> DMatrix<f64> {
    let d = bp.len();
    let mut a = DMatrix::zeros(d, d);
    for k in 0..d {
        let col = m.curvature_omega(u, bp, &crate::manifold::unit(d, k)) * bp;
        a.set_column(k, &col);
    }
    a
}

/// RK4 integration of `Z'' = A(s) Z` along the geodesic, re-evaluating the
/// curvature in the transported frame at every stage.
pub fn segment_jacobi_rk4<M: Manifold + ?Sized>(
    m: &M,
    u: &Frame,
    db: &DVector<f64>,
    dt: f64,
    h: f64,
) -> SegmentJacobi {
    let d = db.len();
    let bp = db / dt;
    let steps = (dt / h).ceil().max(1.0) as usize;
    let h = dt / steps as f64;
    let v = u.apply(db);
    let op_at = |tau: f64| {
        let f = if tau == 0.0 { u.clone() } else { m.transport_frame(u, &(&v * (tau / dt))) };
        jacobi_operator(m, &f, &bp)
    };
    // State (Y, Y') for Y = [Z | C].
    let mut y = DMatrix::zeros(d, 2 * d);
    let mut yp = DMatrix::zeros(d, 2 * d);
    for i in 0..d {
        yp[(i, i)] = 1.0;
        y[(i, d + i)] = 1.0;
    }
    let mut a0 = op_at(0.0);
    for step in 0..steps {
        let t0 = step as f64 * h;
        let am = op_at(t0 + h / 2.0);
        let a1 = op_at(t0 + h);
        let k1y = yp.clone();
        let k1p = &a0 * &y;
        let k2y = &yp + &k1p * (h / 2.0);
        let k2p = &am * (&y + &k1y * (h / 2.0));
        let k3y = &yp + &k2p * (h / 2.0);
        let k3p = &am * (&y + &k2y * (h / 2.0));
        let k4y = &yp + &k3p * h;
        let k4p = &a1 * (&y + &k3y * h);
        y += (k1y + k2y * 2.0 + k3y * 2.0 + k4y) * (h / 6.0);
        yp += (k1p + k2p * 2.0 + k3p * 2.0 + k4p) * (h / 6.0);
        a0 = a1;
    }
    SegmentJacobi {
        z: y.columns(0, d).clone_owned(),
        c: y.columns(d, d).clone_owned(),
        dt,
    }
}

/// Segment Jacobi matrices for every segment of a path.
pub fn jacobi_chain<M: Manifold + ?Sized>(m: &M, sigma: &GeodesicPath) -> Vec<SegmentJacobi> {
    let p = sigma.partition();
    (1..=p.n())
        .map(|i| segment_jacobi(m, &sigma.frames[i - 1], sigma.increment(i), p.dt(i)))
        .collect()
}

/// Density of the pulled-back Riemannian volume with curvature diagnostics.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityReport {
    pub rho: f64,
    /// `ln det(Z_i / dt_i)`; `-inf` for a segment with non-positive determinant.
    pub seg_logdets: Vec<f64>,
    /// `sum Scal(x_{i-1}) dt_i`.
    pub s_p: f64,
    /// `sum <Ric db_i, db_i>`.
    pub r_p: f64,
    /// Higher-order remainder, `None` when undefined on a degenerate sample.
    pub w_p: Option<f64>,
    pub degenerate: bool,
}

impl DensityReport {
    /// `ln rho`; `-inf` for degenerate samples.
    pub fn log_rho(&self) -> f64 {
        if self.degenerate {
            f64::NEG_INFINITY
        } else {
            self.seg_logdets.iter().sum()
        }
    }
}

/// `rho_P = prod det(Z_i / dt_i)` with its `S_P`, `R_P`, `W_P` decomposition.
///
/// A segment with `det <= 0` (an increment past the first conjugate point)
/// sets `rho = 0` and flags the sample as degenerate.
pub fn rho_p<M: Manifold + ?Sized>(m: &M, sigma: &GeodesicPath) -> DensityReport {
    let chain = jacobi_chain(m, sigma);
    rho_p_with_chain(m, sigma, &chain)
}

pub fn rho_p_with_chain<M: Manifold + ?Sized>(m: &M, sigma: &GeodesicPath, chain: &[SegmentJacobi]) -> DensityReport {
    let p = sigma.partition();
    let n = p.n();
    let mut seg_logdets = Vec::with_capacity(n);
    let mut s_p = 0.0;
    let mut r_p = 0.0;
    let mut w_p = Some(0.0);
    let mut degenerate = false;
    for i in 1..=n {
        let u = &sigma.frames[i - 1];
        let db = sigma.increment(i);
        let dt = p.dt(i);
        let zs = &chain[i - 1].z / dt;
        s_p += m.scalar(&u.point) * dt;
        let ric = m.ricci_frame(u);
        let ri = db.dot(&(&ric * db));
        r_p += ri;
        match linalg::log_det(&zs) {
            Some(ld) => {
                seg_logdets.push(ld);
                // tr E + Psi(-U) with Psi through the log-determinant of I + U = Z / dt
                if let Some(w) = w_p.as_mut() {
                    *w += ld + ri / 6.0;
                }
            }
            None => {
                seg_logdets.push(f64::NEG_INFINITY);
                degenerate = true;
                w_p = None;
            }
        }
    }
    let rho = if degenerate { 0.0 } else { seg_logdets.iter().sum::<f64>().exp() };
    DensityReport { rho, seg_logdets, s_p, r_p, w_p, degenerate }
}

/// `W_P = sum (tr E_i + Psi(-U_i))` assembled term by term from the
/// expansion `Z_i / dt_i = I + U_i`, `U_i = Omega(db_i, .) db_i / 6 + E_i`.
/// `None` if some `det(I + U_i) <= 0`.
pub fn w_p_expansion<M: Manifold + ?Sized>(m: &M, sigma: &GeodesicPath) -> Option<f64> {
    let p = sigma.partition();
    let mut w = 0.0;
    for i in 1..=p.n() {
        let u = &sigma.frames[i - 1];
        let db = sigma.increment(i);
        let dt = p.dt(i);
        let j = segment_jacobi(m, u, db, dt);
        let lead = jacobi_operator(m, u, db) / 6.0;
        let e = &j.z / dt - DMatrix::identity(db.len(), db.len()) - &lead;
        let uu = lead + &e;
        w += e.trace() + psi_det(&(-uu))?;
    }
    Some(w)
}

/// `Psi(U) = ln det(I - U) + tr U`, so that `det(I - U) = exp(-tr U + Psi(U))`.
/// `None` when `det(I - U) <= 0`.
pub fn psi_det(u: &DMatrix<f64>) -> Option<f64> {
    let i = DMatrix::identity(u.nrows(), u.ncols());
    linalg::log_det(&(i - u)).map(|ld| ld + u.trace())
}

/// `Psi(U) = -sum_{k >= 2} tr(U^k) / k`, truncated once terms drop below
/// machine precision. Requires `|U| < 1`.
pub fn psi_series(u: &DMatrix<f64>) -> f64 {
    let norm = linalg::op_norm(u);
    let mut pow = u * u;
    let mut sum = 0.0;
    let mut k = 2;
    loop {
        let term = pow.trace() / k as f64;
        sum -= term;
        let bound = u.nrows() as f64 * norm.powi(k) / k as f64;
        if bound < 1e-18 * (1.0 + sum.abs()) || k > 10_000 {
            break;
        }
        pow = &pow * u;
        k += 1;
    }
    sum
}

/// `d |U|^2 / (1 - |U|)`.
pub fn psi_bound(u: &DMatrix<f64>) -> f64 {
    let n = linalg::op_norm(u);
    u.nrows() as f64 * n * n / (1.0 - n)
}

/// Remainder `E` in `Z = dt (I + Omega(db, .) db / 6 + E)` together with the
/// bound `(2 L r^3 + L^2 r^4 / 2) cosh(sqrt(L) r) / 6`, `r = |db|`.
pub fn expansion_remainder<M: Manifold + ?Sized>(m: &M, u: &Frame, db: &DVector<f64>, dt: f64) -> (f64, f64) {
    let j = segment_jacobi(m, u, db, dt);
    let d = db.len();
    let e = &j.z / dt - DMatrix::identity(d, d) - jacobi_operator(m, u, db) / 6.0;
    let lam = m.curvature_bound();
    let r = db.norm();
    let bound = (2.0 * lam * r.powi(3) + 0.5 * lam * lam * r.powi(4)) * (lam.sqrt() * r).cosh() / 6.0;
    (linalg::op_norm(&e), bound)
}

/// Upper bound `prod (sinh(sqrt(K) r_i) / (sqrt(K) r_i))^{d-1}` valid when
/// `Ric >= -(d-1) K`.
pub fn sinh_bound(increments: &[DVector<f64>], k: f64) -> f64 {
    let mut log = 0.0;
    for db in increments {
        let x = k.sqrt() * db.norm();
        if x > 0.0 {
            log += (db.len() as f64 - 1.0) * (x.sinh() / x).ln();
        }
    }
    log.exp()
}

/// Constant `C_1` with `|W_P| <= C_1 sum |db_i|^3` whenever every
/// `|db_i| <= eps`, for curvature bound `lam` in dimension `d`.
pub fn w_cubic_constant(lam: f64, d: usize, eps: f64) -> f64 {
    let c = (2.0 * lam + 0.5 * lam * lam * eps) * (lam.sqrt() * eps).cosh() / 6.0;
    let lead = c * eps + lam / 6.0;
    d as f64 * (c + 2.0 * eps * lead * lead)
}
