//! Convergence tables and pass/fail verdicts from experiment CSVs.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use pathmeasure_core::stats::{fit_line, LineFit};
use pathmeasure_core::AnyManifold;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, StudentsT};

/// Quadrature residual tolerance relative to `max(1, |lhs|)`.
pub const IBP_QUADRATURE_TOL: f64 = 1e-6;
pub const IBP_QUADRATURE_TOL_FLAT: f64 = 1e-10;
pub const HEAT_SLOPE_RANGE: (f64, f64) = (-1.3, -0.7);
pub const HEAT_SUP_TOL: f64 = 0.01;
pub const HEAT_UNCORRECTED_RATIO: f64 = 5.0;
pub const RATE_MIN: f64 = 0.4;
pub const RHO_FLAT_TOL: f64 = 1e-12;
pub const DEVELOP_FLAT_TOL: f64 = 1e-14;
/// Fraction of the tail constant `eps^2 / 4` the decay slope must reach.
pub const TAIL_SLACK: f64 = 0.5;

#[derive(Clone, Debug, Serialize)]
pub struct Fit {
    pub x: &'static str,
    pub y: &'static str,
    pub points: usize,
    pub slope: f64,
    pub intercept: f64,
    pub slope_se: f64,
    /// 95% interval from Student's t; absent with two points.
    pub ci95: Option<(f64, f64)>,
}

#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub threshold: String,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct Group {
    pub file: String,
    pub manifold: String,
    pub quantity: String,
    pub fit: Option<Fit>,
    pub checks: Vec<Check>,
}

#[derive(Clone, Debug, Serialize)]
pub struct Summary {
    pub groups: Vec<Group>,
    /// `None` when no check applied.
    pub all_pass: Option<bool>,
}

struct Row {
    line: u64,
    fields: BTreeMap<String, String>,
}

impl Row {
    fn text(&self, col: &str) -> anyhow::Result<&str> {
        self.fields.get(col).map(String::as_str).ok_or_else(|| anyhow!("line {}: missing column '{col}'", self.line))
    }

    fn num(&self, col: &str) -> anyhow::Result<f64> {
        let s = self.text(col)?;
        s.trim().parse().map_err(|_| anyhow!("line {}: column '{col}': cannot parse '{s}' as a number", self.line))
    }
}

fn read_rows(path: &Path) -> anyhow::Result<(Vec<String>, Vec<Row>)> {
    let ctx = || format!("reading {}", path.display());
    let mut r = csv::Reader::from_path(path).with_context(ctx)?;
    let header: Vec<String> = r.headers().with_context(ctx)?.iter().map(String::from).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            anyhow!("{}: line {line}: {e}", path.display())
        })?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let fields = header.iter().cloned().zip(rec.iter().map(String::from)).collect();
        rows.push(Row { line, fields });
    }
    Ok((header, rows))
}

/// Least-squares fit of `y` on `x` with a 95% slope interval.
pub fn fit(x_name: &'static str, y_name: &'static str, xs: &[f64], ys: &[f64]) -> Option<Fit> {
    let LineFit { slope, intercept, slope_se } = fit_line(xs, ys)?;
    let n = xs.len();
    let ci95 = (n > 2).then(|| {
        let t = StudentsT::new(0.0, 1.0, (n - 2) as f64).expect("positive dof").inverse_cdf(0.975);
        (slope - t * slope_se, slope + t * slope_se)
    });
    Some(Fit { x: x_name, y: y_name, points: n, slope, intercept, slope_se, ci95 })
}

fn check(name: impl Into<String>, value: f64, threshold: impl Into<String>, pass: bool) -> Check {
    Check { name: name.into(), value, threshold: threshold.into(), pass }
}

fn is_flat(manifold: &str) -> bool {
    matches!(manifold.parse::<AnyManifold>(), Ok(AnyManifold::Flat(_)))
}

/// `(Scal, Delta-eigenvalue of the last ambient coordinate)` for models with
/// known targets.
fn model_constants(manifold: &str) -> Option<(f64, f64)> {
    match manifold.parse::<AnyManifold>().ok()? {
        AnyManifold::Flat(_) => Some((0.0, 0.0)),
        AnyManifold::Sphere(s) => Some(((s.d * (s.d - 1)) as f64, s.d as f64)),
    }
}

/// Limit of a density-sweep quantity at time 1, where known.
fn density_target(manifold: &str, quantity: &str) -> Option<f64> {
    let (scal, lambda) = model_constants(manifold)?;
    let (measure, obs) = match quantity.split_once(':') {
        Some((m, o)) => (m, Some(o)),
        None => (quantity, None),
    };
    let f = match obs {
        None | Some("one") => 1.0,
        Some("endpoint-last") if is_flat(manifold) => 0.0,
        // e^{(1/2) Delta} of the last coordinate.
        Some("endpoint-last") => (-lambda / 2.0).exp(),
        Some(_) => return None,
    };
    match measure {
        "rho" => Some((-scal / 6.0).exp()),
        "nu1" => Some(f),
        "nu0" => Some(f * (-scal / 6.0).exp()),
        m if m.starts_with("nu0_alpha=") => Some(f),
        _ => None,
    }
}

fn sorted_by_n(rows: &[&Row]) -> anyhow::Result<Vec<(f64, f64, f64, f64)>> {
    // (n, mesh, estimate, std_error)
    let mut v = rows
        .iter()
        .map(|r| Ok((r.num("n")?, r.num("mesh")?, r.num("estimate")?, r.num("std_error")?)))
        .collect::<anyhow::Result<Vec<_>>>()?;
    v.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(v)
}

fn sweep_groups(file: &str, rows: &[Row]) -> anyhow::Result<Vec<Group>> {
    let mut by_key: BTreeMap<(String, String), Vec<&Row>> = BTreeMap::new();
    for r in rows {
        by_key.entry((r.text("manifold")?.to_string(), r.text("quantity")?.to_string())).or_default().push(r);
    }
    let mut groups = Vec::new();
    for ((manifold, quantity), rs) in &by_key {
        let pts = sorted_by_n(rs)?;
        let mut g = Group { file: file.into(), manifold: manifold.clone(), quantity: quantity.clone(), fit: None, checks: vec![] };
        let flat = is_flat(manifold);
        let last = *pts.last().expect("group is non-empty");
        if quantity == "max_abs_rho_minus_1" {
            g.checks.push(check("rho_identically_one", last.2, format!("<= {RHO_FLAT_TOL:e}"), last.2 <= RHO_FLAT_TOL));
        } else if quantity == "develop_cumsum_error" {
            g.checks.push(check("develop_is_cumsum", last.2, format!("<= {DEVELOP_FLAT_TOL:e}"), last.2 <= DEVELOP_FLAT_TOL));
        } else if quantity.starts_with("nu0") && flat {
            let nu1 = format!("nu1{}", &quantity[quantity.find(':').unwrap_or(quantity.len())..]);
            if let Some(other) = by_key.get(&(manifold.clone(), nu1)) {
                let same = rs.len() == other.len()
                    && rs.iter().zip(other.iter()).all(|(a, b)| {
                        a.fields.get("estimate") == b.fields.get("estimate")
                            && a.fields.get("std_error") == b.fields.get("std_error")
                    });
                g.checks.push(check("equals_nu1_bitwise", same as u8 as f64, "1", same));
            }
        }
        if let Some(target) = density_target(manifold, quantity) {
            let (_, _, mean, se) = last;
            let pass = if se > 0.0 { (mean - target).abs() <= 3.0 * se } else { (mean - target).abs() <= RHO_FLAT_TOL };
            g.checks.push(check(format!("finest_within_3se_of_{target:.6}"), mean, format!("{target} +- {:e}", 3.0 * se), pass));
            let errs: Vec<f64> = pts.iter().map(|p| (p.2 - target).abs()).collect();
            if quantity == "rho" && !flat && pts.len() > 1 {
                let dec = errs.windows(2).all(|w| w[1] < w[0]);
                g.checks.push(check("error_decreasing_in_n", errs[errs.len() - 1], "strictly decreasing", dec));
            }
            if !flat && errs.iter().all(|&e| e > 0.0) {
                let xs: Vec<f64> = pts.iter().map(|p| p.1.ln()).collect();
                let ys: Vec<f64> = errs.iter().map(|e| e.ln()).collect();
                g.fit = fit("ln mesh", "ln |estimate - target|", &xs, &ys);
            }
        } else if quantity == "sup_h_minus_z" || quantity == "endpoint_l2" {
            let pos: Vec<_> = pts.iter().filter(|p| p.2 > 0.0).collect();
            if pos.len() == pts.len() {
                let xs: Vec<f64> = pos.iter().map(|p| p.1.ln()).collect();
                let ys: Vec<f64> = pos.iter().map(|p| p.2.ln()).collect();
                g.fit = fit("ln mesh", "ln error", &xs, &ys);
                if let Some(f) = &g.fit {
                    g.checks.push(check("rate_exponent", f.slope, format!(">= {RATE_MIN}"), f.slope >= RATE_MIN));
                }
            } else if flat && pts.iter().all(|p| p.2 == 0.0) {
                g.checks.push(check("zero_error_on_flat", 0.0, "0", true));
            }
        } else if let Some(eps) = quantity.strip_prefix("outside:eps=") {
            let eps: f64 = eps.parse().with_context(|| format!("{file}: bad epsilon in quantity '{quantity}'"))?;
            let pos: Vec<_> = pts.iter().filter(|p| p.2 > 0.0).collect();
            let xs: Vec<f64> = pos.iter().map(|p| 1.0 / p.1).collect();
            let ys: Vec<f64> = pos.iter().map(|p| p.2.ln()).collect();
            g.fit = fit("1 / mesh", "ln fraction", &xs, &ys);
            if let Some(f) = &g.fit {
                let bound = -eps * eps / 4.0 * TAIL_SLACK;
                g.checks.push(check("tail_decay_slope", f.slope, format!("<= {bound}"), f.slope <= bound));
            }
        } else if quantity.starts_with("outside_weighted") {
            let pos: Vec<_> = pts.iter().filter(|p| p.2 > 0.0).collect();
            let xs: Vec<f64> = pos.iter().map(|p| 1.0 / p.1).collect();
            let ys: Vec<f64> = pos.iter().map(|p| p.2.ln()).collect();
            g.fit = fit("1 / mesh", "ln weighted mass", &xs, &ys);
        }
        groups.push(g);
    }
    Ok(groups)
}

fn heat_groups(file: &str, rows: &[Row]) -> anyhow::Result<Vec<Group>> {
    let mut by_key: BTreeMap<(String, String), Vec<&Row>> = BTreeMap::new();
    for r in rows {
        by_key.entry((r.text("manifold")?.to_string(), r.text("kappa")?.to_string())).or_default().push(r);
    }
    let mut groups = Vec::new();
    for ((manifold, kappa), rs) in by_key {
        let mut pts = rs.iter().map(|r| Ok((r.num("n")?, r.num("sup_error")?))).collect::<anyhow::Result<Vec<_>>>()?;
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        let kappa_v: f64 = kappa.parse().map_err(|_| anyhow!("{file}: bad kappa '{kappa}'"))?;
        let mut g = Group { file: file.into(), manifold, quantity: format!("sup_error:kappa={kappa_v}"), fit: None, checks: vec![] };
        if pts.iter().all(|p| p.1 > 0.0) {
            let xs: Vec<f64> = pts.iter().map(|p| p.0.ln()).collect();
            let ys: Vec<f64> = pts.iter().map(|p| p.1.ln()).collect();
            g.fit = fit("ln n", "ln sup_error", &xs, &ys);
        }
        if kappa_v != 0.0 {
            let last = pts[pts.len() - 1].1;
            g.checks.push(check("finest_sup_error", last, format!("<= {HEAT_SUP_TOL}"), last <= HEAT_SUP_TOL));
            if let Some(f) = &g.fit {
                let (lo, hi) = HEAT_SLOPE_RANGE;
                g.checks.push(check("slope_in_n", f.slope, format!("in [{lo}, {hi}]"), (lo..=hi).contains(&f.slope)));
            }
        }
        groups.push(g);
    }
    Ok(groups)
}

fn ibp_groups(file: &str, rows: &[Row]) -> anyhow::Result<Vec<Group>> {
    let mut groups = Vec::new();
    for r in rows {
        let manifold = r.text("manifold")?.to_string();
        let mode = r.text("mode")?.to_string();
        let (lhs, res, se) = (r.num("lhs")?, r.num("residual")?, r.num("se")?);
        let c = if mode == "quadrature" {
            let tol = if is_flat(&manifold) { IBP_QUADRATURE_TOL_FLAT } else { IBP_QUADRATURE_TOL };
            let lim = tol * lhs.abs().max(1.0);
            check("residual", res, format!("|.| <= {lim:e}"), res.abs() <= lim)
        } else {
            check("residual", res, format!("|.| <= 3 se = {:e}", 3.0 * se), res.abs() <= 3.0 * se)
        };
        groups.push(Group {
            file: file.into(),
            manifold,
            quantity: format!("{mode}:n={}", r.text("n")?),
            fit: None,
            checks: vec![c],
        });
    }
    Ok(groups)
}

fn sample_groups(file: &str, rows: &[Row]) -> anyhow::Result<Vec<Group>> {
    let mut by_manifold: BTreeMap<String, (f64, usize, usize)> = BTreeMap::new();
    for r in rows {
        let e = by_manifold.entry(r.text("manifold")?.to_string()).or_insert((0.0, 0, 0));
        e.0 = e.0.max((r.num("rho")? - 1.0).abs());
        e.1 += 1;
        e.2 += (r.text("degenerate_flag")? == "1") as usize;
    }
    Ok(by_manifold
        .into_iter()
        .map(|(manifold, (dev, n, deg))| {
            let mut checks = vec![check("degenerate_samples", deg as f64, format!("of {n}"), true)];
            if is_flat(&manifold) {
                checks.push(check("per_sample_rho_is_one", dev, format!("<= {RHO_FLAT_TOL:e}"), dev <= RHO_FLAT_TOL));
            }
            Group { file: file.into(), manifold, quantity: "per_sample_rho".into(), fit: None, checks }
        })
        .collect())
}

fn identity_groups(file: &str, rows: &[Row]) -> anyhow::Result<Vec<Group>> {
    rows.iter()
        .map(|r| {
            let pass = r.text("pass")? == "1";
            Ok(Group {
                file: file.into(),
                manifold: r.text("manifold")?.into(),
                quantity: r.text("check")?.into(),
                fit: None,
                checks: vec![check(r.text("check")?, r.num("statistic")?, format!("reference {}", r.text("reference")?), pass)],
            })
        })
        .collect()
}

type HeatPoint = (String, f64, f64);

pub fn summarize(paths: &[PathBuf]) -> anyhow::Result<Summary> {
    let mut groups = Vec::new();
    // (manifold, uncorrected) -> (file, n, sup_error)
    let mut heat_finest: BTreeMap<(String, bool), Vec<HeatPoint>> = BTreeMap::new();
    for path in paths {
        let file = path.display().to_string();
        let (header, rows) = read_rows(path)?;
        let has = |c: &str| header.iter().any(|h| h == c);
        let mut gs = if has("sup_error") {
            for r in &rows {
                let kappa = r.num("kappa").with_context(|| file.clone())?;
                heat_finest.entry((r.text("manifold")?.to_string(), kappa == 0.0)).or_default().push((
                    file.clone(),
                    r.num("n").with_context(|| file.clone())?,
                    r.num("sup_error").with_context(|| file.clone())?,
                ));
            }
            heat_groups(&file, &rows)
        } else if has("lhs") {
            ibp_groups(&file, &rows)
        } else if has("sample_id") && has("rho") {
            sample_groups(&file, &rows)
        } else if has("check") {
            identity_groups(&file, &rows)
        } else if has("quantity") && has("estimate") {
            sweep_groups(&file, &rows)
        } else {
            bail!("{file}: unrecognised columns {header:?}");
        }
        .with_context(|| file.clone())?;
        groups.append(&mut gs);
    }
    // Uncorrected heat runs must end markedly worse than corrected ones.
    for ((manifold, uncorrected), pts) in &heat_finest {
        if !uncorrected {
            continue;
        }
        let Some(corrected) = heat_finest.get(&(manifold.clone(), false)) else { continue };
        let n_max = pts.iter().map(|p| p.1).fold(f64::MIN, f64::max);
        let (Some(u), Some(c)) =
            (pts.iter().find(|p| p.1 == n_max), corrected.iter().find(|p| p.1 == n_max))
        else {
            continue;
        };
        let ratio = u.2 / c.2;
        groups.push(Group {
            file: u.0.clone(),
            manifold: manifold.clone(),
            quantity: format!("uncorrected_vs_corrected:n={n_max}"),
            fit: None,
            checks: vec![check(
                "sup_error_ratio",
                ratio,
                format!(">= {HEAT_UNCORRECTED_RATIO}"),
                ratio >= HEAT_UNCORRECTED_RATIO,
            )],
        });
    }
    let all: Vec<bool> = groups.iter().flat_map(|g| g.checks.iter().map(|c| c.pass)).collect();
    let all_pass = (!all.is_empty()).then(|| all.iter().all(|&p| p));
    Ok(Summary { groups, all_pass })
}

impl Summary {
    pub fn render(&self) -> String {
        let mut s = String::new();
        for g in &self.groups {
            s += &format!("{} [{}] {}\n", g.manifold, g.quantity, g.file);
            match &g.fit {
                Some(f) => {
                    let ci = f.ci95.map(|(a, b)| format!(" (95% CI {a:.4} .. {b:.4})")).unwrap_or_default();
                    s += &format!("  fit {} vs {}: slope {:.4}{ci} over {} points\n", f.y, f.x, f.slope, f.points);
                }
                None => s += "  fit: null\n",
            }
            for c in &g.checks {
                s += &format!("  {} {} = {:.6e} ({})\n", if c.pass { "PASS" } else { "FAIL" }, c.name, c.value, c.threshold);
            }
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
        let p = dir.join(name);
        std::fs::File::create(&p).unwrap().write_all(text.as_bytes()).unwrap();
        p
    }

    #[test]
    fn heat_slope_and_single_row() {
        let dir = tempfile::tempdir().unwrap();
        let mut text = String::from("manifold,kappa,n,sup_error,l2_error,runtime\n");
        for n in [4, 8, 16, 32, 64] {
            text += &format!("sphere-2,0.08333,{n},{},0,0\n", 0.3 / n as f64);
        }
        let p = write(dir.path(), "heat.csv", &text);
        let s = summarize(&[p]).unwrap();
        let f = s.groups[0].fit.as_ref().unwrap();
        assert!((f.slope + 1.0).abs() < 1e-12);
        assert_eq!(s.all_pass, Some(true));

        let p = write(dir.path(), "one.csv", "manifold,kappa,n,sup_error,l2_error,runtime\nsphere-2,0.1,4,0.5,0,0\n");
        let s = summarize(&[p]).unwrap();
        assert!(s.groups[0].fit.is_none());
    }

    #[test]
    fn malformed_csv_names_the_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "bad.csv", "manifold,kappa,n,sup_error,l2_error,runtime\nsphere-2,0.1,4,0.5,0,0\nsphere-2,0.1,8,oops,0,0\n");
        let e = format!("{:#}", summarize(&[p]).unwrap_err());
        assert!(e.contains("line 3"), "{e}");
    }

    #[test]
    fn density_targets() {
        assert_eq!(density_target("flat-3", "rho"), Some(1.0));
        assert!((density_target("sphere-2", "rho").unwrap() - 0.716531).abs() < 1e-6);
        assert!((density_target("sphere-2", "nu1:endpoint-last").unwrap() - 0.367879).abs() < 1e-6);
        assert!((density_target("sphere-2", "nu0:endpoint-last").unwrap() - 0.263597).abs() < 1e-6);
        assert!((density_target("sphere-2", "nu0_alpha=0.5:endpoint-last").unwrap() - 0.367879).abs() < 1e-6);
        assert_eq!(density_target("sphere-2", "nu1:endpoint-1"), None);
    }

    #[test]
    fn tail_slope_check() {
        let dir = tempfile::tempdir().unwrap();
        let mut text = String::from("manifold,quantity,n,mesh,estimate,std_error,n_samples,n_degenerate,wall_time_s\n");
        for n in [8, 16, 32] {
            text += &format!("sphere-2,outside:eps=0.5,{n},{},{},0.001,1000,0,0\n", 1.0 / n as f64, (-(n as f64) / 8.0).exp());
        }
        let s = summarize(&[write(dir.path(), "tails.csv", &text)]).unwrap();
        assert!((s.groups[0].fit.as_ref().unwrap().slope + 0.125).abs() < 1e-9);
        assert_eq!(s.all_pass, Some(true));
    }
}
