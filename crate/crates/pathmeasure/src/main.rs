use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use pathmeasure::config::ExperimentConfig;
use pathmeasure::experiments::Command;
use pathmeasure::runner::run_to_dir;
use pathmeasure::summarize::summarize;

#[derive(Parser)]
#[command(name = "pathmeasure", version, about = "Path-measure Monte Carlo experiments")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run an experiment.
    #[command(flatten)]
    Run(RunCmd),
    /// Fit slopes and check thresholds over experiment CSVs.
    Summarize {
        csv: Vec<PathBuf>,
        /// Write the report as JSON here (default: stdout only).
        #[arg(long)]
        json: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum RunCmd {
    Sample(RunArgs),
    Density(RunArgs),
    Heat(RunArgs),
    IbpFinite(RunArgs),
    IbpLimit(RunArgs),
    KzRate(RunArgs),
    WzRate(RunArgs),
    Tails(RunArgs),
    Identities(RunArgs),
}

#[derive(clap::Args)]
struct RunArgs {
    /// JSON experiment config; defaults apply to missing fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the config seed and the PATHMEASURE_SEED variable.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; 1 is the serial reference, 0 uses every core.
    #[arg(long, default_value_t = 0)]
    threads: usize,
    /// Output directory; overrides `output_path`.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl RunCmd {
    fn split(self) -> (Command, RunArgs) {
        match self {
            RunCmd::Sample(a) => (Command::Sample, a),
            RunCmd::Density(a) => (Command::Density, a),
            RunCmd::Heat(a) => (Command::Heat, a),
            RunCmd::IbpFinite(a) => (Command::IbpFinite, a),
            RunCmd::IbpLimit(a) => (Command::IbpLimit, a),
            RunCmd::KzRate(a) => (Command::KzRate, a),
            RunCmd::WzRate(a) => (Command::WzRate, a),
            RunCmd::Tails(a) => (Command::Tails, a),
            RunCmd::Identities(a) => (Command::Identities, a),
        }
    }
}

fn run(cmd: Command, args: RunArgs) -> anyhow::Result<()> {
    let mut cfg = match &args.config {
        Some(p) => ExperimentConfig::from_path(p)?,
        None => ExperimentConfig::default(),
    };
    cfg.resolve_seed(args.seed)?;
    let out = args.out.clone().unwrap_or_else(|| cfg.output_path.clone());
    let written = run_to_dir(cmd, &cfg, args.threads, &out)?;
    for p in written {
        println!("{}", p.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match cli.cmd {
        Cmd::Run(r) => {
            let (cmd, args) = r.split();
            run(cmd, args)
        }
        Cmd::Summarize { csv, json } => summarize(&csv).and_then(|s| {
            print!("{}", s.render());
            let text = serde_json::to_string_pretty(&s)?;
            match json {
                Some(p) => std::fs::write(&p, text + "\n")?,
                None => println!("{text}"),
            }
            Ok(())
        }),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
