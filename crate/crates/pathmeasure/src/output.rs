//! Artifact formats: CSV tables, path JSON and run manifests.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::Context;
use nalgebra::DVector;
use pathmeasure_core::jacobi::DensityReport;
use pathmeasure_core::{DrivingPath, Partition};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;

#[derive(Clone, Debug, PartialEq)]
pub enum Cell {
    Int(u64),
    Float(f64),
    Text(String),
    Bool(bool),
}

impl From<usize> for Cell {
    fn from(x: usize) -> Self {
        Cell::Int(x as u64)
    }
}

impl From<u64> for Cell {
    fn from(x: u64) -> Self {
        Cell::Int(x)
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Float(x)
    }
}

impl From<&str> for Cell {
    fn from(x: &str) -> Self {
        Cell::Text(x.into())
    }
}

impl From<String> for Cell {
    fn from(x: String) -> Self {
        Cell::Text(x)
    }
}

impl From<bool> for Cell {
    fn from(x: bool) -> Self {
        Cell::Bool(x)
    }
}

/// 17 significant digits, enough to round-trip any `f64`.
pub fn format_float(x: f64) -> String {
    if x.is_nan() {
        "NaN".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{x:.16e}")
    }
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Int(x) => x.to_string(),
            Cell::Float(x) => format_float(*x),
            Cell::Text(s) => s.clone(),
            Cell::Bool(b) => (*b as u8).to_string(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Table { header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.header.len(), "row width");
        self.rows.push(row);
    }

    pub fn write(&self, path: &Path) -> anyhow::Result<()> {
        let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
        w.write_record(&self.header)?;
        for row in &self.rows {
            w.write_record(row.iter().map(Cell::render))?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub enum Artifact {
    Csv(String, Table),
    Json(String, serde_json::Value),
}

impl Artifact {
    pub fn name(&self) -> &str {
        match self {
            Artifact::Csv(n, _) | Artifact::Json(n, _) => n,
        }
    }

    fn write(&self, dir: &Path) -> anyhow::Result<PathBuf> {
        let path = dir.join(self.name());
        match self {
            Artifact::Csv(_, t) => t.write(&path)?,
            Artifact::Json(_, v) => std::fs::write(&path, serde_json::to_string_pretty(v)? + "\n")
                .with_context(|| format!("writing {}", path.display()))?,
        }
        Ok(path)
    }
}

/// Writes every artifact into `dir`; on failure removes what was written.
pub fn write_all(dir: &Path, artifacts: &[Artifact]) -> anyhow::Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut written = Vec::new();
    for a in artifacts {
        match a.write(dir) {
            Ok(p) => written.push(p),
            Err(e) => {
                for p in &written {
                    let _ = std::fs::remove_file(p);
                }
                let _ = std::fs::remove_file(dir.join(a.name()));
                return Err(e);
            }
        }
    }
    Ok(written)
}

/// Path JSON: `{partition, d, increments}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathRecord {
    pub partition: Vec<f64>,
    pub d: usize,
    pub increments: Vec<Vec<f64>>,
}

impl From<&DrivingPath> for PathRecord {
    fn from(b: &DrivingPath) -> Self {
        PathRecord {
            partition: b.partition().times().to_vec(),
            d: b.d(),
            increments: b.increments().iter().map(|v| v.iter().copied().collect()).collect(),
        }
    }
}

impl PathRecord {
    pub fn to_driving_path(&self) -> anyhow::Result<DrivingPath> {
        let p = Partition::new(self.partition.clone())?;
        if self.increments.iter().any(|v| v.len() != self.d) {
            anyhow::bail!("increment length differs from d = {}", self.d);
        }
        Ok(DrivingPath::new(p, self.increments.iter().map(|v| DVector::from_vec(v.clone())).collect())?)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityRecord {
    pub rho: f64,
    pub seg_logdets: Vec<f64>,
    pub s_p: f64,
    pub r_p: f64,
    pub w_p: Option<f64>,
    pub degenerate: bool,
}

impl From<&DensityReport> for DensityRecord {
    fn from(r: &DensityReport) -> Self {
        DensityRecord {
            rho: r.rho,
            seg_logdets: r.seg_logdets.clone(),
            s_p: r.s_p,
            r_p: r.r_p,
            w_p: r.w_p,
            degenerate: r.degenerate,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub library_version: String,
    pub config: ExperimentConfig,
    pub config_hash: String,
    pub threads: usize,
    pub outputs: Vec<String>,
    pub runtime_s: BTreeMap<String, f64>,
}

/// Git blob hash with SHA-256: `sha256("blob <len>\0" + content)`.
pub fn content_hash(content: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", content.len()).as_bytes());
    h.update(content);
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

pub fn config_hash(cfg: &ExperimentConfig) -> String {
    content_hash(serde_json::to_string(cfg).expect("config serializes").as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip() {
        for x in [0.0, -0.0, 1.0 / 3.0, 1e-300, 6.02e23, f64::MIN_POSITIVE, -2.5e-7] {
            let s = format_float(x);
            assert_eq!(s.parse::<f64>().unwrap().to_bits(), x.to_bits(), "{s}");
        }
        assert_eq!(format_float(0.5), "5.0000000000000000e-1");
        assert!(format_float(f64::NAN).parse::<f64>().unwrap().is_nan());
    }

    #[test]
    fn path_json_round_trip() {
        let b = DrivingPath::new(
            Partition::new(vec![0.0, 0.25, 1.0]).unwrap(),
            vec![DVector::from_row_slice(&[0.1, -0.2]), DVector::from_row_slice(&[1.0 / 3.0, 0.0])],
        )
        .unwrap();
        let text = serde_json::to_string(&PathRecord::from(&b)).unwrap();
        let back: PathRecord = serde_json::from_str(&text).unwrap();
        assert_eq!(back.to_driving_path().unwrap(), b);
    }

    #[test]
    fn blob_hash_matches_git_framing() {
        // Known SHA-256 of "blob 0\0".
        assert_eq!(content_hash(b""), "473a0f4c3be8a93681a267e3b1e9a7dcda1185436fe141f7749120a303721813");
    }

    #[test]
    fn failed_writes_leave_nothing_behind() {
        let dir = tempfile::tempdir().unwrap();
        let mut t = Table::new(&["a"]);
        t.push(vec![1.0.into()]);
        let arts = vec![Artifact::Csv("ok.csv".into(), t.clone()), Artifact::Csv("missing/bad.csv".into(), t)];
        assert!(write_all(dir.path(), &arts).is_err());
        assert!(!dir.path().join("ok.csv").exists());
    }
}
