//! Subcommand bodies. Each returns its artifacts; the runner writes them.

use std::collections::BTreeMap;
use std::time::Instant;

use anyhow::{bail, Context};
use nalgebra::{DMatrix, DVector};
use pathmeasure_core::heat::{q_iterate, reference_heat, GridSpec, HeatKernelGrid};
use pathmeasure_core::ibp::{finite_ibp_check, kz_convergence, limit_ibp_check, DirectionSpec, IbpMode};
use pathmeasure_core::jacobi::{expansion_remainder, psi_bound, psi_det, psi_series, rho_p};
use pathmeasure_core::mc::{
    gaussian_identity_check, lcm_all, nu0_weight, run_replicas_collect, sample_bp, tail_fraction, wz_rate,
    PathFunctional, RateReport,
};
use pathmeasure_core::path::develop_unrestricted;
use pathmeasure_core::rng::RngStream;
use pathmeasure_core::stats::McEstimate;
use pathmeasure_core::{linalg, AnyManifold, Manifold, Partition};
use serde_json::json;

use crate::config::{ExperimentConfig, IbpModeConfig};
use crate::exec::Runner;
use crate::observables::Observable;
use crate::output::{Artifact, Cell, DensityRecord, PathRecord, Table};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    /// Emit paths sampled from nu_P^1.
    Sample,
    /// Density and nu_P^0 / nu_P^1 expectations over a refinement sweep.
    Density,
    /// Euler iteration of the corrected heat kernel against the exact semigroup.
    Heat,
    /// Exact integration by parts at a fixed partition.
    IbpFinite,
    /// Integration by parts in the limit on a fine partition.
    IbpLimit,
    /// Convergence of the k_P tangent field to z.
    KzRate,
    /// Wong-Zakai self-refinement rate.
    WzRate,
    /// Mass outside H_P^eps over a sweep.
    Tails,
    /// Determinant, Gaussian moment and segment expansion identities.
    Identities,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Sample => "sample",
            Command::Density => "density",
            Command::Heat => "heat",
            Command::IbpFinite => "ibp-finite",
            Command::IbpLimit => "ibp-limit",
            Command::KzRate => "kz-rate",
            Command::WzRate => "wz-rate",
            Command::Tails => "tails",
            Command::Identities => "identities",
        }
    }
}

#[derive(Debug, Default)]
pub struct Outputs {
    pub artifacts: Vec<Artifact>,
    /// Seconds per experiment, keyed `<manifold>` or `<manifold>/<part>`.
    pub runtime: BTreeMap<String, f64>,
}

pub fn run(cmd: Command, cfg: &ExperimentConfig, runner: &Runner) -> anyhow::Result<Outputs> {
    cfg.validate()?;
    let mut out = Outputs::default();
    match cmd {
        Command::Sample => sample(cfg, &mut out)?,
        Command::Density => density(cfg, runner, &mut out)?,
        Command::Heat => heat(cfg, &mut out)?,
        Command::IbpFinite => ibp_finite(cfg, runner, &mut out)?,
        Command::IbpLimit => ibp_limit(cfg, runner, &mut out)?,
        Command::KzRate => kz_rate(cfg, runner, &mut out)?,
        Command::WzRate => wz(cfg, runner, &mut out)?,
        Command::Tails => tails(cfg, runner, &mut out)?,
        Command::Identities => identities(cfg, runner, &mut out)?,
    }
    Ok(out)
}

const SWEEP_HEADER: [&str; 9] =
    ["manifold", "quantity", "n", "mesh", "estimate", "std_error", "n_samples", "n_degenerate", "wall_time_s"];

fn sweep_row(m: &AnyManifold, quantity: &str, p: &Partition, e: &McEstimate, wall: f64) -> Vec<Cell> {
    vec![
        m.name().into(),
        quantity.into(),
        p.n().into(),
        p.mesh().into(),
        e.mean.into(),
        e.std_error.into(),
        e.n_samples.into(),
        e.n_degenerate.into(),
        wall.into(),
    ]
}

fn rate_rows(t: &mut Table, m: &AnyManifold, quantity: &str, r: &RateReport, n_samples: usize, wall: f64) {
    for row in &r.rows {
        t.push(vec![
            m.name().into(),
            quantity.into(),
            row.n.into(),
            row.mesh.into(),
            row.error.into(),
            row.std_error.into(),
            n_samples.into(),
            0usize.into(),
            wall.into(),
        ]);
    }
}

fn direction(cfg: &ExperimentConfig, m: &AnyManifold) -> anyhow::Result<DirectionSpec> {
    if cfg.k.len() != m.dim() {
        bail!("k has {} components but {} has dimension {}", cfg.k.len(), m.name(), m.dim());
    }
    Ok(DirectionSpec::constant(DVector::from_vec(cfg.k.clone())))
}

fn sample(cfg: &ExperimentConfig, out: &mut Outputs) -> anyhow::Result<()> {
    let p = cfg.partition()?;
    for m in cfg.manifolds()? {
        let t0 = Instant::now();
        let mut paths = Vec::new();
        let mut header = vec!["sample_id".to_string(), "i".into(), "s".into()];
        header.extend((1..=m.ambient_dim()).map(|j| format!("x{j}")));
        let mut vertices = Table { header, rows: Vec::new() };
        for r in 0..cfg.n_samples {
            let mut rng = RngStream::new(cfg.seed, r as u64);
            let b = sample_bp(&p, m.dim(), &mut rng);
            let sigma = develop_unrestricted(&m, &b);
            let rep = rho_p(&m, &sigma);
            paths.push(json!({
                "sample_id": r,
                "path": PathRecord::from(&b),
                "density": DensityRecord::from(&rep),
            }));
            for (i, x) in sigma.vertices().iter().enumerate() {
                let mut row: Vec<Cell> = vec![r.into(), i.into(), p.times()[i].into()];
                row.extend(x.iter().map(|&c| Cell::from(c)));
                vertices.rows.push(row);
            }
        }
        let name = m.name();
        out.artifacts.push(Artifact::Json(format!("paths_{name}.json"), json!({ "manifold": name, "paths": paths })));
        out.artifacts.push(Artifact::Csv(format!("vertices_{name}.csv"), vertices));
        out.runtime.insert(name, t0.elapsed().as_secs_f64());
    }
    Ok(())
}

struct SampleRecord {
    report: pathmeasure_core::jacobi::DensityReport,
    /// `max_i |x_i - o - b(s_i)|` on flat space.
    develop_error: Option<f64>,
}

fn density(cfg: &ExperimentConfig, runner: &Runner, out: &mut Outputs) -> anyhow::Result<()> {
    let levels = cfg.levels()?;
    let fine = match &cfg.n_list {
        Some(ns) => Partition::uniform(lcm_all(ns))?,
        None => levels[0].clone(),
    };
    let finest = (0..levels.len()).max_by_key(|&j| levels[j].n()).expect("non-empty");
    let mut table = Table::new(&SWEEP_HEADER);
    let mut samples = Table::new(&["manifold", "sample_id", "rho", "S_P", "R_P", "W_P", "degenerate_flag"]);
    for m in cfg.manifolds()? {
        let obs = Observable::parse(&cfg.observable, &m)?;
        let flat = m.constant_curvature() == Some(0.0);
        let q = if cfg.alpha.is_some() { 4 } else { 3 };
        let t0 = Instant::now();
        let base = m.base_point();
        let (est, records) = run_replicas_collect(runner, cfg.n_samples, q * levels.len(), cfg.seed, |rng, v, flags| {
            let b = sample_bp(&fine, m.dim(), rng);
            let mut rec = None;
            for (j, l) in levels.iter().enumerate() {
                let bl = if *l == fine { b.clone() } else { b.aggregate(l).expect("levels divide the fine partition") };
                let sigma = develop_unrestricted(&m, &bl);
                let (w, rep) = nu0_weight(&m, &sigma, None);
                let f = obs.eval(&sigma);
                v[q * j] = rep.rho;
                flags[q * j] = rep.degenerate;
                v[q * j + 1] = f;
                v[q * j + 2] = f * w;
                flags[q * j + 2] = rep.degenerate;
                if let Some(a) = cfg.alpha {
                    let (wa, _) = nu0_weight(&m, &sigma, Some(a));
                    v[q * j + 3] = f * wa;
                    flags[q * j + 3] = rep.degenerate;
                }
                if j == finest {
                    let develop_error = flat.then(|| {
                        bl.values()
                            .iter()
                            .zip(sigma.vertices())
                            .map(|(bv, x)| (x - &base - bv).amax())
                            .fold(0.0, f64::max)
                    });
                    rec = Some(SampleRecord { report: rep, develop_error });
                }
            }
            rec.expect("finest level visited")
        });
        let wall = t0.elapsed().as_secs_f64();
        let mut names = vec!["rho".to_string(), format!("nu1:{}", cfg.observable), format!("nu0:{}", cfg.observable)];
        if let Some(a) = cfg.alpha {
            names.push(format!("nu0_alpha={a}:{}", cfg.observable));
        }
        for (j, l) in levels.iter().enumerate() {
            for (k, name) in names.iter().enumerate() {
                table.push(sweep_row(&m, name, l, &est[q * j + k], wall));
            }
        }
        if flat {
            let max_dev = records.iter().map(|r| (r.report.rho - 1.0).abs()).fold(0.0, f64::max);
            let dev_err = records.iter().filter_map(|r| r.develop_error).fold(0.0, f64::max);
            for (name, value) in [("max_abs_rho_minus_1", max_dev), ("develop_cumsum_error", dev_err)] {
                let e = McEstimate { mean: value, std_error: 0.0, n_samples: cfg.n_samples as u64, n_degenerate: 0 };
                table.push(sweep_row(&m, name, &levels[finest], &e, wall));
            }
        }
        if cfg.per_sample {
            for (r, rec) in records.iter().enumerate() {
                let rep = &rec.report;
                samples.push(vec![
                    m.name().into(),
                    r.into(),
                    rep.rho.into(),
                    rep.s_p.into(),
                    rep.r_p.into(),
                    rep.w_p.unwrap_or(f64::NAN).into(),
                    rep.degenerate.into(),
                ]);
            }
        }
        out.runtime.insert(m.name(), wall);
    }
    out.artifacts.push(Artifact::Csv("density.csv".into(), table));
    if cfg.per_sample {
        out.artifacts.push(Artifact::Csv("density_samples.csv".into(), samples));
    }
    Ok(())
}

fn heat(cfg: &ExperimentConfig, out: &mut Outputs) -> anyhow::Result<()> {
    let n_list = cfg.n_list()?;
    let kappas = cfg.kappa.to_vec();
    let mut tables: Vec<Table> =
        kappas.iter().map(|_| Table::new(&["manifold", "kappa", "n", "sup_error", "l2_error", "runtime"])).collect();
    for m in cfg.manifolds()? {
        let obs = Observable::parse(&cfg.observable, &m)?;
        let spec = GridSpec::for_manifold(&m, cfg.resolution, cfg.s_total);
        let t0 = Instant::now();
        let ref_grid = HeatKernelGrid::build(&m, spec, cfg.s_total, 0.0)?;
        let f = ref_grid.sample(|x| obs.at(x));
        let exact = reference_heat(&ref_grid, &f, cfg.s_total)?;
        out.runtime.insert(format!("{}/reference", m.name()), t0.elapsed().as_secs_f64());
        if cfg.per_sample {
            let mut header = vec!["node".to_string(), "weight".into()];
            header.extend((1..=m.ambient_dim()).map(|j| format!("x{j}")));
            let mut nodes = Table { header, rows: Vec::new() };
            for (i, (x, w)) in ref_grid.nodes.iter().zip(&ref_grid.weights).enumerate() {
                let mut row: Vec<Cell> = vec![i.into(), (*w).into()];
                row.extend(x.iter().map(|&c| Cell::from(c)));
                nodes.rows.push(row);
            }
            out.artifacts.push(Artifact::Csv(format!("heat_nodes_{}.csv", m.name()), nodes));
        }
        for (t, &kappa) in tables.iter_mut().zip(&kappas) {
            for &n in &n_list {
                let t0 = Instant::now();
                let grid = HeatKernelGrid::build(&m, spec, cfg.s_total / n as f64, kappa)?;
                let approx = q_iterate(&grid, &f, n, cfg.s_total)?;
                let (sup, l2) = grid.errors(&approx, &exact);
                let secs = t0.elapsed().as_secs_f64();
                t.push(vec![m.name().into(), kappa.into(), n.into(), sup.into(), l2.into(), secs.into()]);
            }
        }
        out.runtime.insert(m.name(), t0.elapsed().as_secs_f64());
    }
    for (i, t) in tables.into_iter().enumerate() {
        out.artifacts.push(Artifact::Csv(format!("heat_kappa_{i}.csv"), t));
    }
    Ok(())
}

const IBP_HEADER: [&str; 7] = ["manifold", "mode", "n", "lhs", "rhs", "residual", "se"];

fn ibp_finite(cfg: &ExperimentConfig, runner: &Runner, out: &mut Outputs) -> anyhow::Result<()> {
    let mut table = Table::new(&IBP_HEADER);
    let levels = cfg.levels()?;
    for m in cfg.manifolds()? {
        let f = Observable::parse(&cfg.observable, &m)?;
        let k = direction(cfg, &m)?;
        let t0 = Instant::now();
        for p in &levels {
            let (mode, label) = match cfg.mode {
                IbpModeConfig::Quadrature => (IbpMode::Quadrature { order: cfg.quadrature_order }, "quadrature"),
                IbpModeConfig::Mc => (IbpMode::MonteCarlo { n_samples: cfg.n_samples, seed: cfg.seed }, "mc"),
            };
            let r = finite_ibp_check(runner, &m, p, &f, &k, mode)
                .with_context(|| format!("{} with n = {}", m.name(), p.n()))?;
            table.push(vec![
                m.name().into(),
                label.into(),
                p.n().into(),
                r.lhs.into(),
                r.rhs.into(),
                r.residual.into(),
                r.se.into(),
            ]);
        }
        out.runtime.insert(m.name(), t0.elapsed().as_secs_f64());
    }
    out.artifacts.push(Artifact::Csv("ibp_finite.csv".into(), table));
    Ok(())
}

fn ibp_limit(cfg: &ExperimentConfig, runner: &Runner, out: &mut Outputs) -> anyhow::Result<()> {
    let mut table = Table::new(&IBP_HEADER);
    let p = cfg.partition()?;
    for m in cfg.manifolds()? {
        let f = Observable::parse(&cfg.observable, &m)?;
        let k = direction(cfg, &m)?;
        let t0 = Instant::now();
        let r = limit_ibp_check(runner, &m, &p, &f, &k, cfg.n_samples, cfg.seed);
        table.push(vec![
            m.name().into(),
            "limit".into(),
            p.n().into(),
            r.lhs.into(),
            r.rhs.into(),
            r.residual.into(),
            r.se.into(),
        ]);
        out.runtime.insert(m.name(), t0.elapsed().as_secs_f64());
    }
    out.artifacts.push(Artifact::Csv("ibp_limit.csv".into(), table));
    Ok(())
}

fn kz_rate(cfg: &ExperimentConfig, runner: &Runner, out: &mut Outputs) -> anyhow::Result<()> {
    let mut table = Table::new(&SWEEP_HEADER);
    let n_list = cfg.n_list()?;
    for m in cfg.manifolds()? {
        let k = direction(cfg, &m)?;
        let t0 = Instant::now();
        let r = kz_convergence(runner, &m, &k, &n_list, cfg.n_samples, cfg.seed)?;
        let wall = t0.elapsed().as_secs_f64();
        rate_rows(&mut table, &m, "sup_h_minus_z", &r, cfg.n_samples, wall);
        out.runtime.insert(m.name(), wall);
    }
    out.artifacts.push(Artifact::Csv("kz_rate.csv".into(), table));
    Ok(())
}

fn wz(cfg: &ExperimentConfig, runner: &Runner, out: &mut Outputs) -> anyhow::Result<()> {
    let mut table = Table::new(&SWEEP_HEADER);
    let n_list = cfg.n_list()?;
    for m in cfg.manifolds()? {
        let t0 = Instant::now();
        let r = wz_rate(runner, &m, &|x: &DVector<f64>| x.clone(), &n_list, cfg.n_samples, cfg.seed)?;
        let wall = t0.elapsed().as_secs_f64();
        rate_rows(&mut table, &m, "endpoint_l2", &r, cfg.n_samples, wall);
        out.runtime.insert(m.name(), wall);
    }
    out.artifacts.push(Artifact::Csv("wz_rate.csv".into(), table));
    Ok(())
}

fn tails(cfg: &ExperimentConfig, runner: &Runner, out: &mut Outputs) -> anyhow::Result<()> {
    let mut table = Table::new(&SWEEP_HEADER);
    let eps = cfg.epsilon;
    for m in cfg.manifolds()? {
        let t_m = Instant::now();
        for p in cfg.levels()? {
            let t0 = Instant::now();
            let (frac, weighted) = tail_fraction(runner, &m, &p, eps, cfg.n_samples, cfg.seed);
            let wall = t0.elapsed().as_secs_f64();
            table.push(sweep_row(&m, &format!("outside:eps={eps}"), &p, &frac, wall));
            table.push(sweep_row(&m, &format!("outside_weighted:eps={eps}"), &p, &weighted, wall));
        }
        out.runtime.insert(m.name(), t_m.elapsed().as_secs_f64());
    }
    out.artifacts.push(Artifact::Csv("tails.csv".into(), table));
    Ok(())
}

/// Random `d x d` matrix with operator norm uniform in `(0, max_norm]`.
pub fn random_matrix(rng: &mut RngStream, d: usize, max_norm: f64) -> DMatrix<f64> {
    let g = DMatrix::from_fn(d, d, |_, _| rng.normal());
    let scale = max_norm * (1.0 - rng.uniform()) / linalg::op_norm(&g).max(f64::MIN_POSITIVE);
    g * scale
}

pub const PSI_TOL: f64 = 1e-12;

fn identities(cfg: &ExperimentConfig, runner: &Runner, out: &mut Outputs) -> anyhow::Result<()> {
    let mut table = Table::new(&["manifold", "check", "n_cases", "statistic", "reference", "std_error", "pass"]);
    let t0 = Instant::now();
    // Matrix identities do not depend on the manifold.
    let mut worst_gap: f64 = 0.0;
    let mut worst_ratio: f64 = 0.0;
    for case in 0..cfg.cases {
        let mut rng = RngStream::new(cfg.seed, case as u64);
        let d = 1 + (rng.uniform() * 4.0) as usize;
        let u = random_matrix(&mut rng, d, 0.5);
        let psi = psi_det(&u).context("|U| <= 0.5 keeps det(I - U) positive")?;
        worst_gap = worst_gap.max((psi - psi_series(&u)).abs());
        worst_ratio = worst_ratio.max(psi.abs() / psi_bound(&u));
    }
    table.push(vec![
        "-".into(),
        "psi_det_vs_series".into(),
        cfg.cases.into(),
        worst_gap.into(),
        PSI_TOL.into(),
        0.0.into(),
        (worst_gap <= PSI_TOL).into(),
    ]);
    table.push(vec![
        "-".into(),
        "psi_over_bound".into(),
        cfg.cases.into(),
        worst_ratio.into(),
        1.0.into(),
        0.0.into(),
        (worst_ratio <= 1.0).into(),
    ]);
    out.runtime.insert("matrices".into(), t0.elapsed().as_secs_f64());
    let p = cfg.partition()?;
    for m in cfg.manifolds()? {
        let t0 = Instant::now();
        let (mc, exact) = gaussian_identity_check(runner, &p, m.dim(), cfg.p, cfg.c, cfg.n_samples, cfg.seed)?;
        table.push(vec![
            m.name().into(),
            "gaussian_moment".into(),
            cfg.n_samples.into(),
            mc.mean.into(),
            exact.into(),
            mc.std_error.into(),
            mc.within(exact, 3.0).into(),
        ]);
        let mut worst: f64 = 0.0;
        for case in 0..cfg.cases {
            let mut rng = RngStream::new(cfg.seed ^ 0x5e9, case as u64);
            // A frame at a random point: the end frame of a short random path.
            let start = Partition::uniform(4)?;
            let sigma = develop_unrestricted(&m, &sample_bp(&start, m.dim(), &mut rng));
            let u = &sigma.frames[4];
            let dir = rng.normal_vec(m.dim());
            let len = rng.uniform();
            let db = if dir.norm() > 0.0 { dir.normalize() * len } else { dir };
            let dt = 0.01 + 0.99 * rng.uniform();
            let (e, bound) = expansion_remainder(&m, u, &db, dt);
            if bound > 0.0 {
                worst = worst.max(e / bound);
            } else if e > 0.0 {
                worst = f64::INFINITY;
            }
        }
        table.push(vec![
            m.name().into(),
            "segment_expansion_over_bound".into(),
            cfg.cases.into(),
            worst.into(),
            1.0.into(),
            0.0.into(),
            (worst <= 1.0).into(),
        ]);
        out.runtime.insert(m.name(), t0.elapsed().as_secs_f64());
    }
    out.artifacts.push(Artifact::Csv("identities.csv".into(), table));
    Ok(())
}
