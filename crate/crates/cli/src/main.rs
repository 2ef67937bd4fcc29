//! `phdgn`: simulate, verify, train and generate datasets from JSON configs.

mod config;
mod run;
mod simulate;
mod verify;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{classify, load, ExitKind, Failure};

#[derive(Parser)]
#[command(name = "phdgn", version, about = "Port-Hamiltonian graph dynamics runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// JSON config; defaults are used when omitted (where the command allows).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Overrides the seed in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads.
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Energy rollouts over a scheme × step-size sweep.
    Simulate(Common),
    /// Numerical checks of the structural and sensitivity properties.
    Verify(Common),
    /// Train a model on a synthetic task.
    Train(Common),
    /// Write a task dataset directory.
    Data(Common),
}

fn dispatch(cli: Cli) -> anyhow::Result<()> {
    let common = match &cli.command {
        Command::Simulate(c) | Command::Verify(c) | Command::Train(c) | Command::Data(c) => c.clone(),
    };
    if let Some(jobs) = common.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs.max(1))
            .build_global()
            .map_err(|e| config::config_error(e.to_string()))?;
    }
    let path = common.config.as_deref();
    match cli.command {
        Command::Simulate(_) => {
            if path.is_none() {
                return Err(config::config_error("simulate needs --config"));
            }
            let mut cfg: simulate::SimulateConfig = load(path)?;
            if let Some(s) = common.seed {
                cfg.seed = s;
            }
            simulate::run(&cfg, &common.out)
        }
        Command::Verify(_) => {
            let mut cfg: verify::VerifyConfig = load(path)?;
            if let Some(s) = common.seed {
                cfg.seed = s;
            }
            let report = verify::run(&cfg, &common.out)?;
            if report.passed {
                Ok(())
            } else {
                let failed: Vec<_> = report.checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
                Err(Failure {
                    kind: ExitKind::Verify,
                    message: format!("failed checks: {}", failed.join(", ")),
                }
                .into())
            }
        }
        Command::Train(_) => {
            if path.is_none() {
                return Err(config::config_error("train needs --config"));
            }
            let cfg: run::TrainConfig = load(path)?;
            run::run_train(&cfg.resolve(common.seed), &common.out)
        }
        Command::Data(_) => {
            if path.is_none() {
                return Err(config::config_error("data needs --config"));
            }
            let mut cfg: phdgn::tasks::TaskSpec = load(path)?;
            if let Some(s) = common.seed {
                cfg.seed = s;
            }
            run::run_data(&cfg, &common.out)
        }
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let kind = classify(&e);
            eprintln!("error: {e:#}");
            ExitCode::from(kind as u8)
        }
    }
}
