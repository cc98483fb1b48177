//! Runs a subcommand end to end: compute, write artifacts, write manifest.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::sync::Once;
use std::time::Duration;

use anyhow::anyhow;

use crate::config::ExperimentConfig;
use crate::exec::{BudgetExceeded, Runner};
use crate::experiments::{self, Command, Outputs};
use crate::output::{config_hash, write_all, Artifact, RunManifest};

static QUIET_BUDGET_PANICS: Once = Once::new();

/// Keeps the default panic message for real panics only.
fn install_panic_hook() {
    QUIET_BUDGET_PANICS.call_once(|| {
        let prev = std::panic::take_hook();
        std::panic::set_hook(Box::new(move |info| {
            if info.payload().downcast_ref::<BudgetExceeded>().is_none() {
                prev(info);
            }
        }));
    });
}

/// Computes `cmd` under the configured budget, converting a budget abort
/// into an error.
pub fn compute(cmd: Command, cfg: &ExperimentConfig, threads: usize) -> anyhow::Result<(Outputs, usize)> {
    install_panic_hook();
    let runner = Runner::new(threads)?.with_budget(Some(Duration::from_secs_f64(cfg.budget_seconds)));
    let res = catch_unwind(AssertUnwindSafe(|| experiments::run(cmd, cfg, &runner)));
    match res {
        Ok(r) => Ok((r?, runner.threads())),
        Err(payload) => match payload.downcast::<BudgetExceeded>() {
            Ok(b) => Err(anyhow!("{} aborted: {b}", cmd.name())),
            Err(p) => std::panic::resume_unwind(p),
        },
    }
}

/// Runs `cmd` and writes its CSVs and `<cmd>_manifest.json` into `out_dir`.
/// Returns the written paths, manifest last.
pub fn run_to_dir(cmd: Command, cfg: &ExperimentConfig, threads: usize, out_dir: &Path) -> anyhow::Result<Vec<PathBuf>> {
    let (outputs, threads) = compute(cmd, cfg, threads)?;
    let manifest = RunManifest {
        subcommand: cmd.name().into(),
        library_version: env!("CARGO_PKG_VERSION").into(),
        config: cfg.clone(),
        config_hash: config_hash(cfg),
        threads,
        outputs: outputs.artifacts.iter().map(|a| a.name().to_string()).collect(),
        runtime_s: outputs.runtime,
    };
    let mut artifacts = outputs.artifacts;
    artifacts.push(Artifact::Json(format!("{}_manifest.json", cmd.name()), serde_json::to_value(&manifest)?));
    write_all(out_dir, &artifacts)
}
