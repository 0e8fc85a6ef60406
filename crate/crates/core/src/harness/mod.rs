//! Experiment orchestration: scenarios in, CSV tables out.

pub mod analytic;
pub mod metrics;
pub mod output;
pub mod scenario;

use std::panic::{catch_unwind, AssertUnwindSafe};

use rayon::prelude::*;
use thiserror::Error;

pub use metrics::{run_trial, run_trial_report, summarize, SummaryRow, TrialResult};
pub use scenario::{Scenario, ScenarioError};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("trial {trial} (seed {seed}) failed: {message}")]
    Trial {
        trial: usize,
        seed: u64,
        message: String,
    },
    #[error("trial {trial} (seed {seed}) panicked: {message}")]
    Panic {
        trial: usize,
        seed: u64,
        message: String,
    },
    #[error("cannot build thread pool: {0}")]
    ThreadPool(String),
    #[error("output error: {0}")]
    Output(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Experiment {
    pub scenario: Scenario,
    /// Sorted by trial index.
    pub trials: Vec<TrialResult>,
    pub summary: Vec<SummaryRow>,
}

fn panic_message(payload: Box<dyn std::any::Any + Send>) -> String {
    if let Some(s) = payload.downcast_ref::<&str>() {
        s.to_string()
    } else if let Some(s) = payload.downcast_ref::<String>() {
        s.clone()
    } else {
        "non-string panic payload".to_string()
    }
}

/// Runs every trial of `scenario` on `jobs` worker threads. The first failing
/// trial (by index) aborts the experiment and is reported with its seed.
pub fn run_experiment(scenario: &Scenario, jobs: usize) -> Result<Experiment, HarnessError> {
    scenario.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| HarnessError::ThreadPool(e.to_string()))?;
    let results: Vec<Result<TrialResult, HarnessError>> = pool.install(|| {
        (0..scenario.trials)
            .into_par_iter()
            .map(|trial| {
                catch_unwind(AssertUnwindSafe(|| run_trial(scenario, trial))).unwrap_or_else(|p| {
                    Err(HarnessError::Panic {
                        trial,
                        seed: scenario.trial_seed(trial),
                        message: panic_message(p),
                    })
                })
            })
            .collect()
    });
    let mut trials = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    trials.sort_by_key(|t| t.trial);
    let summary = summarize(scenario, &trials);
    Ok(Experiment {
        scenario: scenario.clone(),
        trials,
        summary,
    })
}

/// One experiment per value of `key`, each with id `<id>-<key>=<value>`.
pub fn sweep(
    scenario: &Scenario,
    key: &str,
    values: &[String],
    jobs: usize,
) -> Result<Vec<(String, Experiment)>, HarnessError> {
    values
        .iter()
        .map(|v| {
            let mut sc = scenario.clone();
            sc.set(key, v)?;
            sc.id = format!("{}-{key}={v}", scenario.id);
            Ok((v.clone(), run_experiment(&sc, jobs)?))
        })
        .collect()
}
