use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};

use clonesim::harness::output::write_outputs;
use clonesim::harness::{run_experiment, sweep, HarnessError, Scenario, ScenarioError};

#[derive(Debug, Parser)]
#[command(
    name = "clonesim",
    version,
    about = "Clone-detection experiments for sensor networks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run every trial of a scenario and write the CSV tables.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the scenario's trial count.
        #[arg(long)]
        trials: Option<usize>,
        /// Overrides the scenario's base seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads (default: available cores).
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Run a scenario once per value of one key.
    Sweep {
        #[arg(long)]
        scenario: PathBuf,
        /// KEY=v1,v2,...
        #[arg(long)]
        vary: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Parse and check a scenario without running it.
    Validate {
        #[arg(long)]
        scenario: PathBuf,
    },
}

/// Failure classes mapped to exit codes.
enum Failure {
    Config(anyhow::Error),
    Runtime(anyhow::Error),
}

impl From<ScenarioError> for Failure {
    fn from(e: ScenarioError) -> Self {
        Failure::Config(e.into())
    }
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        match e {
            HarnessError::Scenario(e) => Failure::Config(e.into()),
            other => Failure::Runtime(other.into()),
        }
    }
}

fn default_jobs() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn parse_vary(vary: &str) -> anyhow::Result<(String, Vec<String>)> {
    let (key, values) = vary
        .split_once('=')
        .with_context(|| format!("--vary expects KEY=v1,v2,..., got {vary:?}"))?;
    let values: Vec<String> = values
        .split(',')
        .map(|v| v.trim().to_string())
        .filter(|v| !v.is_empty())
        .collect();
    if values.is_empty() {
        bail!("--vary {key} has no values");
    }
    Ok((key.trim().to_string(), values))
}

fn execute(command: Command) -> Result<(), Failure> {
    match command {
        Command::Run {
            scenario,
            out,
            trials,
            seed,
            jobs,
        } => {
            let mut sc = Scenario::from_file(&scenario)?;
            if let Some(t) = trials {
                sc.trials = t;
            }
            if let Some(s) = seed {
                sc.base_seed = s;
            }
            let exp = run_experiment(&sc, jobs.unwrap_or_else(default_jobs))?;
            write_outputs(&out, &[(None, &exp)])?;
            log::info!("wrote {} trials to {}", exp.trials.len(), out.display());
        }
        Command::Sweep {
            scenario,
            vary,
            out,
            jobs,
        } => {
            let sc = Scenario::from_file(&scenario)?;
            let (key, values) = parse_vary(&vary).map_err(Failure::Config)?;
            // Catch a bad key or value before running anything.
            for v in &values {
                let mut probe = sc.clone();
                probe.set(&key, v)?;
                probe.validate()?;
            }
            let runs = sweep(&sc, &key, &values, jobs.unwrap_or_else(default_jobs))?;
            let refs: Vec<(Option<String>, _)> =
                runs.iter().map(|(v, e)| (Some(v.clone()), e)).collect();
            write_outputs(&out, &refs)?;
        }
        Command::Validate { scenario } => {
            let sc = Scenario::from_file(&scenario)?;
            sc.validate()?;
            println!("{}: ok", scenario.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
