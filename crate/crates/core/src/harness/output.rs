//! CSV writers for `metrics.csv`, `summary.csv` and `curves.csv`.

use std::fs;
use std::path::Path;

use serde::Serialize;

use super::{Experiment, HarnessError};

#[derive(Debug, Serialize)]
struct MetricsRow<'a> {
    scenario_id: &'a str,
    protocol: &'static str,
    n: usize,
    trial: usize,
    messages_per_node: f64,
    cache_mean: f64,
    witnesses: f64,
    detected: f64,
    evidence_msgs: usize,
    transport_failures: usize,
    reach_h: f64,
}

#[derive(Debug, Serialize)]
struct SummaryCsvRow<'a> {
    scenario_id: &'a str,
    protocol: &'static str,
    n: usize,
    metric: &'static str,
    mean: f64,
    stddev: f64,
    prediction: Option<f64>,
    rel_error: Option<f64>,
}

#[derive(Debug, Serialize)]
struct CurveRow<'a> {
    x: &'a str,
    y: f64,
    series: String,
}

fn out_err(e: impl std::fmt::Display) -> HarnessError {
    HarnessError::Output(e.to_string())
}

/// Per-trial metrics shown as curves for a single run.
const RUN_SERIES: [&str; 4] = ["messages_per_node", "cache_mean", "witnesses", "reach_h"];

/// Writes all tables for `experiments` into `dir`. Each experiment comes with
/// its sweep value, or `None` for a plain run.
pub fn write_outputs(
    dir: &Path,
    experiments: &[(Option<String>, &Experiment)],
) -> Result<(), HarnessError> {
    fs::create_dir_all(dir).map_err(out_err)?;
    let mut metrics = csv::Writer::from_path(dir.join("metrics.csv")).map_err(out_err)?;
    let mut summary = csv::Writer::from_path(dir.join("summary.csv")).map_err(out_err)?;
    let mut curves = csv::Writer::from_path(dir.join("curves.csv")).map_err(out_err)?;
    let mut config = String::new();

    for (x, exp) in experiments {
        let sc = &exp.scenario;
        let id = sc.id.as_str();
        let protocol = sc.protocol.as_str();
        let n = sc.deployment.n;
        config.push_str(&format!("# scenario_id={id}\n"));
        config.push_str(&sc.to_config_text());
        for t in &exp.trials {
            metrics
                .serialize(MetricsRow {
                    scenario_id: id,
                    protocol,
                    n,
                    trial: t.trial,
                    messages_per_node: t.messages_per_node,
                    cache_mean: t.cache_mean,
                    witnesses: t.witnesses,
                    detected: t.detected,
                    evidence_msgs: t.evidence_msgs,
                    transport_failures: t.transport_failures,
                    reach_h: t.reach_h,
                })
                .map_err(out_err)?;
        }
        for row in &exp.summary {
            summary
                .serialize(SummaryCsvRow {
                    scenario_id: id,
                    protocol,
                    n,
                    metric: row.metric,
                    mean: row.mean,
                    stddev: row.stddev,
                    prediction: row.prediction,
                    rel_error: row.rel_error,
                })
                .map_err(out_err)?;
        }
        match x {
            Some(x) => {
                for row in &exp.summary {
                    curves
                        .serialize(CurveRow {
                            x,
                            y: row.mean,
                            series: row.metric.to_string(),
                        })
                        .map_err(out_err)?;
                    if let Some(p) = row.prediction {
                        curves
                            .serialize(CurveRow {
                                x,
                                y: p,
                                series: format!("{}_predicted", row.metric),
                            })
                            .map_err(out_err)?;
                    }
                }
            }
            None => {
                for t in &exp.trials {
                    let trial = t.trial.to_string();
                    let values = [t.messages_per_node, t.cache_mean, t.witnesses, t.reach_h];
                    for (series, y) in RUN_SERIES.iter().zip(values) {
                        curves
                            .serialize(CurveRow {
                                x: &trial,
                                y,
                                series: series.to_string(),
                            })
                            .map_err(out_err)?;
                    }
                }
            }
        }
    }
    metrics.flush().map_err(out_err)?;
    summary.flush().map_err(out_err)?;
    curves.flush().map_err(out_err)?;
    fs::write(dir.join("config.txt"), config).map_err(out_err)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::{run_experiment, Scenario};

    #[test]
    fn writes_expected_headers() {
        let sc = Scenario::parse("n=120\ng=3\ntrials=2\nclones=1\n").unwrap();
        let exp = run_experiment(&sc, 2).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_outputs(dir.path(), &[(None, &exp)]).unwrap();
        let metrics = fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
        assert_eq!(
            metrics.lines().next().unwrap(),
            "scenario_id,protocol,n,trial,messages_per_node,cache_mean,witnesses,detected,\
             evidence_msgs,transport_failures,reach_h"
        );
        assert_eq!(metrics.lines().count(), 3);
        let summary = fs::read_to_string(dir.path().join("summary.csv")).unwrap();
        assert_eq!(
            summary.lines().next().unwrap(),
            "scenario_id,protocol,n,metric,mean,stddev,prediction,rel_error"
        );
        let curves = fs::read_to_string(dir.path().join("curves.csv")).unwrap();
        assert_eq!(curves.lines().next().unwrap(), "x,y,series");
        let config = fs::read_to_string(dir.path().join("config.txt")).unwrap();
        assert!(config.contains("hash_function=sha256"));
    }
}
