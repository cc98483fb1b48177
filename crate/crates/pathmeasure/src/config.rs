//! Experiment configuration files.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use pathmeasure_core::heat::KAPPA_DEFAULT;
use pathmeasure_core::{AnyManifold, Partition};
use serde::{Deserialize, Serialize};

use crate::observables::Observable;

/// Environment variable that overrides the configured seed.
pub const SEED_ENV: &str = "PATHMEASURE_SEED";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum PartitionConfig {
    Uniform { n: usize },
    Explicit { times: Vec<f64> },
}

impl PartitionConfig {
    pub fn build(&self) -> pathmeasure_core::Result<Partition> {
        match self {
            PartitionConfig::Uniform { n } => Partition::uniform(*n),
            PartitionConfig::Explicit { times } => Partition::new(times.clone()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IbpModeConfig {
    Quadrature,
    Mc,
}

/// A scalar or a list in the config file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> OneOrMany<T> {
    pub fn to_vec(&self) -> Vec<T> {
        match self {
            OneOrMany::One(x) => vec![x.clone()],
            OneOrMany::Many(xs) => xs.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// One name (`flat-2`, `sphere-2`) or a list; runs repeat per manifold.
    pub manifold: OneOrMany<String>,
    pub partition: PartitionConfig,
    /// Uniform levels for sweeps; overrides `partition` where a sweep applies.
    pub n_list: Option<Vec<usize>>,
    pub seed: u64,
    pub n_samples: usize,
    pub epsilon: f64,
    pub kappa: OneOrMany<f64>,
    pub alpha: Option<f64>,
    pub observable: String,
    pub output_path: PathBuf,
    /// Latitude rings of the heat grid (nodes per axis on flat space).
    pub resolution: usize,
    pub s_total: f64,
    pub budget_seconds: f64,
    /// Exponent and constant of the Gaussian moment identity.
    pub p: f64,
    pub c: f64,
    /// Constant `k'` of the integration by parts direction.
    pub k: Vec<f64>,
    pub mode: IbpModeConfig,
    pub quadrature_order: usize,
    /// Random cases per deterministic identity.
    pub cases: usize,
    /// Write one row per sample where the subcommand supports it.
    pub per_sample: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            manifold: OneOrMany::One("sphere-2".into()),
            partition: PartitionConfig::Uniform { n: 16 },
            n_list: None,
            seed: 0,
            n_samples: 10_000,
            epsilon: 0.1,
            kappa: OneOrMany::One(KAPPA_DEFAULT),
            alpha: None,
            observable: "endpoint-last".into(),
            output_path: PathBuf::from("out"),
            resolution: 32,
            s_total: 0.5,
            budget_seconds: 600.0,
            p: 1.0,
            c: 1.0,
            k: vec![1.0, 0.0],
            mode: IbpModeConfig::Quadrature,
            quadrature_order: 20,
            cases: 1000,
            per_sample: true,
        }
    }
}

impl ExperimentConfig {
    pub fn from_path(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let cfg: ExperimentConfig =
            serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn manifolds(&self) -> anyhow::Result<Vec<AnyManifold>> {
        self.manifold
            .to_vec()
            .iter()
            .map(|s| s.parse::<AnyManifold>().map_err(anyhow::Error::from))
            .collect()
    }

    pub fn partition(&self) -> anyhow::Result<Partition> {
        Ok(self.partition.build()?)
    }

    /// Sweep levels: uniform `n_list` if given, else the single partition.
    pub fn levels(&self) -> anyhow::Result<Vec<Partition>> {
        match &self.n_list {
            Some(ns) => Ok(ns.iter().map(|&n| Partition::uniform(n)).collect::<Result<_, _>>()?),
            None => Ok(vec![self.partition()?]),
        }
    }

    pub fn n_list(&self) -> anyhow::Result<Vec<usize>> {
        match &self.n_list {
            Some(ns) => Ok(ns.clone()),
            None => Ok(vec![self.partition()?.n()]),
        }
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        let ms = self.manifolds()?;
        if ms.is_empty() {
            bail!("no manifold given");
        }
        self.partition()?;
        if let Some(ns) = &self.n_list {
            if ns.is_empty() || ns.contains(&0) {
                bail!("n_list must be non-empty with positive entries");
            }
        }
        if self.n_samples == 0 {
            bail!("n_samples must be at least 1");
        }
        if self.epsilon.is_nan() || self.epsilon <= 0.0 {
            bail!("epsilon must be positive");
        }
        if self.s_total.is_nan() || self.s_total <= 0.0 {
            bail!("s_total must be positive");
        }
        if self.budget_seconds.is_nan() || self.budget_seconds <= 0.0 {
            bail!("budget_seconds must be positive");
        }
        if self.kappa.to_vec().is_empty() {
            bail!("kappa list is empty");
        }
        for m in &ms {
            Observable::parse(&self.observable, m)?;
        }
        Ok(())
    }

    /// Applies `--seed` over the environment override over the file value.
    pub fn resolve_seed(&mut self, flag: Option<u64>) -> anyhow::Result<()> {
        if let Some(s) = flag {
            self.seed = s;
        } else if let Ok(v) = std::env::var(SEED_ENV) {
            self.seed = v.trim().parse().with_context(|| format!("{SEED_ENV}='{v}' is not a u64"))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_overrides() {
        let cfg: ExperimentConfig = serde_json::from_str(
            r#"{"manifold": ["flat-2", "sphere-2"], "partition": {"kind": "explicit", "times": [0, 0.25, 1]}, "kappa": [0.0, 0.1]}"#,
        )
        .unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.manifolds().unwrap().len(), 2);
        assert_eq!(cfg.partition().unwrap().n(), 2);
        assert_eq!(cfg.kappa.to_vec(), vec![0.0, 0.1]);
        assert_eq!(cfg.n_samples, 10_000);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        for text in [
            r#"{"manifold": "torus-2"}"#,
            r#"{"n_samples": 0}"#,
            r#"{"partition": {"kind": "explicit", "times": [0, 0.7, 0.5, 1]}}"#,
            r#"{"observable": "nonsense"}"#,
            r#"{"sed": 3}"#,
        ] {
            let parsed: Result<ExperimentConfig, _> = serde_json::from_str(text);
            assert!(parsed.map_err(anyhow::Error::from).and_then(|c| c.validate()).is_err(), "{text}");
        }
    }
}
