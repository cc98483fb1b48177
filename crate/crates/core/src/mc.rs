//! Monte Carlo estimators under the approximating path measures.

use alloc::vec;
use alloc::vec::Vec;
use nalgebra::DVector;
#[allow(unused_imports)] // inherent float methods shadow these when std is linked
use num_traits::Float as _;

use crate::error::{Error, Result};
use crate::jacobi::{rho_p, DensityReport};
use crate::manifold::{Manifold, Point};
use crate::path::{develop_unrestricted, DrivingPath, GeodesicPath, Partition};
use crate::rng::RngStream;
use crate::stats::{loglog_slope, McEstimate, Moments};

/// Replicas per reduction block. Blocks are reduced in index order, so the
/// result does not depend on how blocks are scheduled.
pub const BLOCK: usize = 1024;

/// Runs independent blocks of work, returning results in block order.
pub trait Executor: Sync {
    fn map_blocks<T, F>(&self, n_blocks: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync;
}

/// Single-threaded executor; the reproducibility reference.
#[derive(Clone, Copy, Debug, Default)]
pub struct Serial;

impl Executor for Serial {
    fn map_blocks<T, F>(&self, n_blocks: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync,
    {
        (0..n_blocks).map(f).collect()
    }
}

/// Runs `n_samples` replicas. Replica `r` gets `RngStream::new(seed, r)` and
/// writes `k` values plus a degeneracy flag per value.
pub fn run_replicas<E, F>(exec: &E, n_samples: usize, k: usize, seed: u64, f: F) -> Vec<McEstimate>
where
    E: Executor,
    F: Fn(&mut RngStream, &mut [f64], &mut [bool]) + Sync,
{
    run_replicas_collect(exec, n_samples, k, seed, |rng, vals, flags| f(rng, vals, flags)).0
}

/// As [`run_replicas`], also returning one record per replica in replica order.
pub fn run_replicas_collect<E, F, R>(exec: &E, n_samples: usize, k: usize, seed: u64, f: F) -> (Vec<McEstimate>, Vec<R>)
where
    E: Executor,
    R: Send,
    F: Fn(&mut RngStream, &mut [f64], &mut [bool]) -> R + Sync,
{
    let n_blocks = n_samples.div_ceil(BLOCK);
    let blocks = exec.map_blocks(n_blocks, |b| {
        let mut acc = vec![Moments::default(); k];
        let mut deg = vec![0u64; k];
        let mut vals = vec![0.0; k];
        let mut flags = vec![false; k];
        let mut records = Vec::new();
        for r in b * BLOCK..((b + 1) * BLOCK).min(n_samples) {
            let mut rng = RngStream::new(seed, r as u64);
            flags.iter_mut().for_each(|x| *x = false);
            records.push(f(&mut rng, &mut vals, &mut flags));
            for j in 0..k {
                acc[j].push(vals[j]);
                deg[j] += flags[j] as u64;
            }
        }
        (acc, deg, records)
    });
    let mut acc = vec![Moments::default(); k];
    let mut deg = vec![0u64; k];
    let mut records = Vec::with_capacity(n_samples);
    for (a, d, r) in blocks {
        for j in 0..k {
            acc[j].merge(&a[j]);
            deg[j] += d[j];
        }
        records.extend(r);
    }
    (acc.iter().zip(&deg).map(|(m, &d)| McEstimate::from_moments(m, d)).collect(), records)
}

/// Brownian skeleton: independent `N(0, dt_i I)` increments.
pub fn sample_bp(partition: &Partition, d: usize, rng: &mut RngStream) -> DrivingPath {
    let incs = (1..=partition.n())
        .map(|i| {
            rng.seek_segment(i as u64);
            rng.normal_vec(d) * partition.dt(i).sqrt()
        })
        .collect();
    DrivingPath::new(partition.clone(), incs).expect("increments match the partition")
}

/// `(Z0, Z1) = (prod (sqrt(2 pi) dt_i)^d, (2 pi)^{dn/2})`.
pub fn normalization_constants(partition: &Partition, d: usize) -> (f64, f64) {
    let two_pi = 2.0 * core::f64::consts::PI;
    let z0 = (1..=partition.n()).map(|i| (two_pi.sqrt() * partition.dt(i)).powi(d as i32)).product();
    let z1 = two_pi.powf(d as f64 * partition.n() as f64 / 2.0);
    (z0, z1)
}

/// A bounded functional of a piecewise-geodesic path.
pub trait PathFunctional: Sync {
    fn eval(&self, sigma: &GeodesicPath) -> f64;
}

impl<F: Fn(&GeodesicPath) -> f64 + Sync> PathFunctional for F {
    fn eval(&self, sigma: &GeodesicPath) -> f64 {
        self(sigma)
    }
}

/// Samples a path under `nu_P^1`.
pub fn sample_path<M: Manifold + ?Sized>(m: &M, partition: &Partition, rng: &mut RngStream) -> GeodesicPath {
    develop_unrestricted(m, &sample_bp(partition, m.dim(), rng))
}

/// `E f` under `nu_P^1`.
pub fn expectation_nu1<E: Executor, M: Manifold + ?Sized, F: PathFunctional>(
    exec: &E,
    m: &M,
    partition: &Partition,
    f: &F,
    n_samples: usize,
    seed: u64,
) -> McEstimate {
    run_replicas(exec, n_samples, 1, seed, |rng, out, _| {
        out[0] = f.eval(&sample_path(m, partition, rng));
    })[0]
}

/// `chi_{P,alpha} = exp(sum (alpha Scal(x_{i-1}) + (1 - alpha) Scal(x_i)) dt_i / 6)`.
pub fn chi_alpha<M: Manifold + ?Sized>(m: &M, sigma: &GeodesicPath, alpha: f64) -> f64 {
    let p = sigma.partition();
    let sum: f64 = (1..=p.n())
        .map(|i| (alpha * m.scalar(sigma.vertex(i - 1)) + (1.0 - alpha) * m.scalar(sigma.vertex(i))) * p.dt(i))
        .sum();
    (sum / 6.0).exp()
}

/// Weight of a `nu_P^1` sample for `nu_P^0`, optionally times `chi_{P,alpha}`.
pub fn nu0_weight<M: Manifold + ?Sized>(m: &M, sigma: &GeodesicPath, alpha: Option<f64>) -> (f64, DensityReport) {
    let rep = rho_p(m, sigma);
    let w = match alpha {
        Some(a) if !rep.degenerate => rep.rho * chi_alpha(m, sigma, a),
        _ => rep.rho,
    };
    (w, rep)
}

/// `int f dnu_P^0` by weighting `nu_P^1` samples with `rho_P` (and
/// `chi_{P,alpha}` when `alpha` is given). Degenerate samples stay in the
/// average with weight zero.
pub fn expectation_nu0<E: Executor, M: Manifold + ?Sized, F: PathFunctional>(
    exec: &E,
    m: &M,
    partition: &Partition,
    f: &F,
    n_samples: usize,
    seed: u64,
    alpha: Option<f64>,
) -> McEstimate {
    run_replicas(exec, n_samples, 1, seed, |rng, out, flag| {
        let sigma = sample_path(m, partition, rng);
        let (w, rep) = nu0_weight(m, &sigma, alpha);
        out[0] = f.eval(&sigma) * w;
        flag[0] = rep.degenerate;
    })[0]
}

/// Common-random-number sweep: one Brownian skeleton on `fine` per replica,
/// aggregated onto each of `levels` (each refined by `fine`). `f` maps the
/// level's driving path to a value and a degeneracy flag.
pub fn refinement_sweep<E, F>(
    exec: &E,
    fine: &Partition,
    levels: &[Partition],
    d: usize,
    n_samples: usize,
    seed: u64,
    f: F,
) -> Result<Vec<McEstimate>>
where
    E: Executor,
    F: Fn(usize, &DrivingPath) -> (f64, bool) + Sync,
{
    for l in levels {
        if fine.refinement_indices(l).is_none() {
            return Err(Error::InvalidPartition("sweep levels must be refined by the fine partition".into()));
        }
    }
    Ok(run_replicas(exec, n_samples, levels.len(), seed, |rng, out, flags| {
        let b = sample_bp(fine, d, rng);
        for (j, l) in levels.iter().enumerate() {
            let bl = if l == fine { b.clone() } else { b.aggregate(l).expect("checked refinement") };
            let (v, deg) = f(j, &bl);
            out[j] = v;
            flags[j] = deg;
        }
    }))
}

/// Mean density on each uniform level `n_list`, sharing one skeleton.
pub fn density_sweep<E: Executor, M: Manifold + ?Sized>(
    exec: &E,
    m: &M,
    n_list: &[usize],
    n_samples: usize,
    seed: u64,
) -> Result<Vec<McEstimate>> {
    let levels = n_list.iter().map(|&n| Partition::uniform(n)).collect::<Result<Vec<_>>>()?;
    let fine = Partition::uniform(lcm_all(n_list))?;
    refinement_sweep(exec, &fine, &levels, m.dim(), n_samples, seed, |_, b| {
        let rep = rho_p(m, &develop_unrestricted(m, b));
        (rep.rho, rep.degenerate)
    })
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Least common multiple of `ns`.
pub fn lcm_all(ns: &[usize]) -> usize {
    ns.iter().fold(1, |acc, &n| acc / gcd(acc, n) * n)
}

/// Empirical mass outside `H_P^eps`, unweighted and `rho_P`-weighted.
pub fn tail_fraction<E: Executor, M: Manifold + ?Sized>(
    exec: &E,
    m: &M,
    partition: &Partition,
    eps: f64,
    n_samples: usize,
    seed: u64,
) -> (McEstimate, McEstimate) {
    let est = run_replicas(exec, n_samples, 2, seed, |rng, out, flags| {
        let b = sample_bp(partition, m.dim(), rng);
        let outside = b.increments().iter().any(|db| db.norm() >= eps);
        out[0] = outside as u8 as f64;
        out[1] = 0.0;
        if outside {
            let rep = rho_p(m, &develop_unrestricted(m, &b));
            out[1] = rep.rho;
            flags[1] = rep.degenerate;
        }
    });
    (est[0], est[1])
}

#[derive(Clone, Debug, PartialEq)]
pub struct RateRow {
    pub n: usize,
    pub mesh: f64,
    pub error: f64,
    pub std_error: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RateReport {
    pub rows: Vec<RateRow>,
    /// Fitted exponent `gamma` in `error ~ |P|^gamma`; `None` if undefined.
    pub slope: Option<f64>,
}

impl RateReport {
    pub fn from_rows(rows: Vec<RateRow>) -> Self {
        let xs: Vec<f64> = rows.iter().map(|r| r.mesh).collect();
        let ys: Vec<f64> = rows.iter().map(|r| r.error).collect();
        let slope = if ys.iter().all(|&y| y > 0.0) { loglog_slope(&xs, &ys).map(|f| f.slope) } else { None };
        RateReport { rows, slope }
    }
}

/// Wong-Zakai self-refinement: the largest entry of `n_list` is the
/// reference; every other level is compared against it through the
/// endpoint map `g` in `L^2`.
pub fn wz_rate<E, M, G>(exec: &E, m: &M, g: &G, n_list: &[usize], n_samples: usize, seed: u64) -> Result<RateReport>
where
    E: Executor,
    M: Manifold + ?Sized,
    G: Fn(&Point) -> DVector<f64> + Sync,
{
    let n_ref = *n_list.iter().max().ok_or_else(|| Error::Domain("empty n_list".into()))?;
    let coarse: Vec<usize> = n_list.iter().copied().filter(|&n| n != n_ref).collect();
    let fine = Partition::uniform(n_ref)?;
    let levels = coarse.iter().map(|&n| Partition::uniform(n)).collect::<Result<Vec<_>>>()?;
    for l in &levels {
        if fine.refinement_indices(l).is_none() {
            return Err(Error::InvalidPartition("every level must divide the reference".into()));
        }
    }
    let k = levels.len();
    let est = run_replicas(exec, n_samples, k, seed, |rng, out, _| {
        let b = sample_bp(&fine, m.dim(), rng);
        let reference = g(develop_unrestricted(m, &b).endpoint());
        for (j, l) in levels.iter().enumerate() {
            let bl = b.aggregate(l).expect("checked refinement");
            out[j] = (g(develop_unrestricted(m, &bl).endpoint()) - &reference).norm_squared();
        }
    });
    let rows = coarse
        .iter()
        .zip(&est)
        .map(|(&n, e)| {
            let l2 = e.mean.sqrt();
            let se = if l2 > 0.0 { e.std_error / (2.0 * l2) } else { 0.0 };
            RateRow { n, mesh: 1.0 / n as f64, error: l2, std_error: se }
        })
        .collect();
    Ok(RateReport::from_rows(rows))
}

/// Monte Carlo and closed form of `E exp((p/2) C sum |dB_j|^2)`.
pub fn gaussian_identity_check<E: Executor>(
    exec: &E,
    partition: &Partition,
    d: usize,
    p: f64,
    c: f64,
    n_samples: usize,
    seed: u64,
) -> Result<(McEstimate, f64)> {
    let mut log_exact = 0.0;
    for i in 1..=partition.n() {
        let x = p * c * partition.dt(i);
        if x >= 1.0 {
            return Err(Error::Domain(alloc::format!("p C dt_{i} = {x} >= 1: the expectation diverges")));
        }
        log_exact += -(d as f64) / 2.0 * (1.0 - x).ln();
    }
    let est = run_replicas(exec, n_samples, 1, seed, |rng, out, _| {
        let b = sample_bp(partition, d, rng);
        let q: f64 = b.increments().iter().map(|db| db.norm_squared()).sum();
        out[0] = (0.5 * p * c * q).exp();
    })[0];
    Ok((est, log_exact.exp()))
}

/// `int_{H_P^eps} exp(p (R_P - S_P)) dnu_P^1`.
pub fn curvature_exponential_moment<E: Executor, M: Manifold + ?Sized>(
    exec: &E,
    m: &M,
    partition: &Partition,
    p: f64,
    eps: f64,
    n_samples: usize,
    seed: u64,
) -> McEstimate {
    run_replicas(exec, n_samples, 1, seed, |rng, out, _| {
        let b = sample_bp(partition, m.dim(), rng);
        out[0] = if b.increments().iter().any(|db| db.norm() >= eps) {
            0.0
        } else {
            let rep = rho_p(m, &develop_unrestricted(m, &b));
            (p * (rep.r_p - rep.s_p)).exp()
        };
    })[0]
}
