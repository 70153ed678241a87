use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use strata::config::ExperimentConfig;

mod commands;
mod identities;

#[derive(Parser)]
#[command(name = "strata", version, about = "Rotating stratified compressible flow experiments")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Common {
    /// JSON experiment configuration; defaults are used when absent.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Comma-separated list replacing the configured eps values.
    #[arg(long, global = true, value_delimiter = ',')]
    eps: Option<Vec<f64>>,
    #[arg(long, global = true)]
    gamma: Option<f64>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Hydrostatic profile and its checks.
    Profile,
    /// QG runs: single-mode decay table or energy-hierarchy trajectories.
    Qg {
        /// Number of Fourier modes in the initial data; 1 gives the decay table.
        #[arg(long)]
        modes: Option<usize>,
    },
    /// Residual of the approximate solution over the residual eps sweep.
    AnsatzResidual,
    /// Relative-entropy convergence study of the 3D solver.
    Converge,
    /// Operator and boundary-layer identity suites.
    Identities,
}

fn load(c: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &c.config {
        Some(p) => ExperimentConfig::load(p).with_context(|| format!("loading {}", p.display()))?,
        None => ExperimentConfig::default(),
    };
    if let Some(e) = &c.eps {
        cfg.eps = e.clone();
        cfg.residual_eps = e.clone();
    }
    if let Some(g) = c.gamma {
        cfg.law.gamma = g;
    }
    if let Some(o) = &c.out {
        cfg.output_dir = o.clone();
    }
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    std::fs::create_dir_all(&cfg.output_dir).with_context(|| format!("creating {}", cfg.output_dir.display()))?;
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = load(&cli.common).and_then(|cfg| match cli.cmd {
        Cmd::Profile => commands::profile(&cfg),
        Cmd::Qg { modes } => commands::qg(&cfg, modes),
        Cmd::AnsatzResidual => commands::ansatz_residual(&cfg),
        Cmd::Converge => commands::converge(&cfg),
        Cmd::Identities => identities::run(&cfg),
    });
    match res {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("one or more checks failed");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
