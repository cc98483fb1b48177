//! Acceptance suite: runs each cookbook config and prints one verdict line
//! per criterion. Exits non-zero if any criterion fails.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use pathmeasure::config::ExperimentConfig;
use pathmeasure::experiments::Command;
use pathmeasure::runner::run_to_dir;
use pathmeasure::summarize::{summarize, Group};
use pathmeasure_core::mc::{expectation_nu0, expectation_nu1, Serial};
use pathmeasure_core::{Flat, GeodesicPath, Partition};

fn config(name: &str) -> ExperimentConfig {
    let p = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name);
    ExperimentConfig::from_path(&p).unwrap_or_else(|e| panic!("{e:#}"))
}

struct Run {
    files: Vec<PathBuf>,
    elapsed: Duration,
}

fn run(cmd: Command, cfg_name: &str, dir: &Path) -> Result<Run, String> {
    let cfg = config(cfg_name);
    let t0 = Instant::now();
    let files = run_to_dir(cmd, &cfg, 0, &dir.join(cmd.name())).map_err(|e| format!("{e:#}"))?;
    let elapsed = t0.elapsed();
    Ok(Run { files: files.into_iter().filter(|p| p.extension().is_some_and(|e| e == "csv")).collect(), elapsed })
}

/// Checks of the groups selected by `pick`; fails when none applied.
fn verdict(groups: &[Group], pick: impl Fn(&Group) -> bool) -> (bool, String) {
    let mut notes = Vec::new();
    let mut ok = true;
    let mut any = false;
    for g in groups.iter().filter(|g| pick(g)) {
        for c in &g.checks {
            any = true;
            ok &= c.pass;
            notes.push(format!("{} {} {}={:.4e}", g.manifold, g.quantity, c.name, c.value));
        }
        if let Some(f) = &g.fit {
            notes.push(format!("{} slope={:.3}", g.quantity, f.slope));
        }
    }
    (ok && any, notes.join("; "))
}

struct Report {
    failures: usize,
}

impl Report {
    fn line(&mut self, id: u32, title: &str, pass: bool, elapsed: Option<Duration>, limit: Option<Duration>, detail: &str) {
        let in_time = match (elapsed, limit) {
            (Some(e), Some(l)) => e <= l,
            _ => true,
        };
        let pass = pass && in_time;
        if !pass {
            self.failures += 1;
        }
        let time = match (elapsed, limit) {
            (Some(e), Some(l)) => format!(" [{:.1} s, limit {} s]", e.as_secs_f64(), l.as_secs()),
            (Some(e), None) => format!(" [{:.1} s]", e.as_secs_f64()),
            _ => String::new(),
        };
        println!("criterion {id:>2} {}: {title}{time} :: {detail}", if pass { "PASS" } else { "FAIL" });
    }
}

fn summarized(r: &Result<Run, String>) -> Result<Vec<Group>, String> {
    let r = r.as_ref().map_err(Clone::clone)?;
    summarize(&r.files).map(|s| s.groups).map_err(|e| format!("{e:#}"))
}

fn criterion(report: &mut Report, id: u32, title: &str, r: &Result<Run, String>, limit: Option<u64>, pick: impl Fn(&Group) -> bool) {
    match summarized(r) {
        Ok(groups) => {
            let (pass, detail) = verdict(&groups, pick);
            let elapsed = r.as_ref().ok().map(|r| r.elapsed);
            report.line(id, title, pass, elapsed, limit.map(Duration::from_secs), &detail);
        }
        Err(e) => report.line(id, title, false, None, None, &e),
    }
}

fn main() -> ExitCode {
    let tmp = tempfile::tempdir().expect("temp dir");
    let dir = tmp.path();
    let mut report = Report { failures: 0 };

    // 1. Flat space: the CLI run plus a direct same-stream comparison.
    let flat = run(Command::Density, "c01_flat.json", dir);
    let same_stream = (1..=3).all(|d| {
        let m = Flat::new(d);
        let p = Partition::uniform(16).unwrap();
        let f = |s: &GeodesicPath| s.endpoint().iter().map(|x| x.sin()).sum::<f64>();
        expectation_nu0(&Serial, &m, &p, &f, 4096, 5, None) == expectation_nu1(&Serial, &m, &p, &f, 4096, 5)
    });
    match summarized(&flat) {
        Ok(groups) => {
            let (pass, detail) = verdict(&groups, |g| {
                g.quantity == "max_abs_rho_minus_1"
                    || g.quantity == "develop_cumsum_error"
                    || g.quantity == "per_sample_rho"
                    || g.quantity.starts_with("nu0")
            });
            let elapsed = flat.as_ref().ok().map(|r| r.elapsed);
            let detail = format!("{detail}; direct nu0 == nu1 bitwise: {same_stream}");
            report.line(1, "flat-space degeneracy", pass && same_stream, elapsed, Some(Duration::from_secs(1)), &detail);
        }
        Err(e) => report.line(1, "flat-space degeneracy", false, None, None, &e),
    }

    // 2-4 share one sweep.
    let dens = run(Command::Density, "c02_c03_c04_density.json", dir);
    criterion(&mut report, 2, "scalar curvature correction of rho_P", &dens, Some(120), |g| g.quantity == "rho");
    criterion(&mut report, 3, "weighted observable under nu_P^1 and nu_P^0", &dens, None, |g| {
        g.quantity.starts_with("nu1:") || g.quantity.starts_with("nu0:")
    });
    criterion(&mut report, 4, "alpha = 1/2 curvature weight cancellation", &dens, None, |g| {
        g.quantity.starts_with("nu0_alpha=0.5:")
    });

    let heat = run(Command::Heat, "c05_heat.json", dir);
    criterion(&mut report, 5, "heat-kernel Euler scheme", &heat, Some(180), |_| true);

    let ibp = run(Command::IbpFinite, "c06_ibp_finite.json", dir);
    criterion(&mut report, 6, "exact finite-dimensional integration by parts", &ibp, Some(30), |_| true);

    let lim = run(Command::IbpLimit, "c07_ibp_limit.json", dir);
    criterion(&mut report, 7, "limiting integration by parts", &lim, Some(120), |_| true);

    let kz = run(Command::KzRate, "c08_kz_rate.json", dir);
    criterion(&mut report, 8, "k_P -> z convergence rate", &kz, None, |_| true);

    let wz = run(Command::WzRate, "c09_wz_rate.json", dir);
    criterion(&mut report, 9, "Wong-Zakai self-refinement rate", &wz, None, |_| true);

    let ids = run(Command::Identities, "c10_identities.json", dir);
    criterion(&mut report, 10, "determinant, Gaussian moment and expansion identities", &ids, None, |_| true);

    let tails = run(Command::Tails, "c11_tails.json", dir);
    criterion(&mut report, 11, "tail decay outside H_P^eps", &tails, None, |g| g.quantity.starts_with("outside:"));

    if report.failures == 0 {
        println!("acceptance: all criteria pass");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {} criteria fail", report.failures);
        ExitCode::FAILURE
    }
}
