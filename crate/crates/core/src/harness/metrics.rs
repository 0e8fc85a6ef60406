//! Per-trial measurements and their aggregation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::analytic;
use super::scenario::Scenario;
use super::HarnessError;
use crate::adversary::apply_adversary;
use crate::chord_overlay::build_overlay;
use crate::dht_detection::{run_dht_round, ClaimPlan, DhtRoundConfig};
use crate::identity::RingSpace;
use crate::net_model::{deploy_network, Network};
use crate::rde_detection::run_rde_round;
use crate::report::{Protocol, RoundReport};

const ADVERSARY_STREAM: u64 = 1;
const PROTOCOL_STREAM: u64 = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct DhtTrialStats {
    pub claims: usize,
    pub overlay_hops: usize,
    pub physical_hops: usize,
    pub max_overlay_hops: usize,
    pub predecessor_receipt_probability: f64,
    pub claims_per_examinee: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RdeTrialStats {
    pub lines: usize,
    pub max_line_messages: usize,
    pub border_discards: usize,
    /// (replica, lines carrying it) pairs over all cloned identities.
    pub replicas: usize,
    pub replicas_caught: usize,
    pub replica_reach_sum: usize,
    pub max_claim_buffer: usize,
}

/// Everything a trial contributes to the outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialResult {
    pub trial: usize,
    pub seed: u64,
    pub nodes: usize,
    pub mean_degree: f64,
    pub messages_per_node: f64,
    /// Mean storage over honest nodes: cache entries (DHT) or neighbor-list
    /// length (RDE).
    pub cache_mean: f64,
    /// Mean witness count per cloned identity.
    pub witnesses: f64,
    /// Fraction of cloned identities with at least one witness.
    pub detected: f64,
    pub evidence_msgs: usize,
    pub action_msgs: usize,
    pub transport_failures: usize,
    pub claims_dropped: usize,
    pub evidence_count: usize,
    pub revocations: usize,
    /// Mean reach per exploration line (RDE only).
    pub reach_h: f64,
    pub dht: Option<DhtTrialStats>,
    pub rde: Option<RdeTrialStats>,
}

/// Deployment, adversary and round for one trial, before summarising.
pub fn run_trial_report(
    scenario: &Scenario,
    trial: usize,
) -> Result<(Network, RoundReport), HarnessError> {
    let seed = scenario.trial_seed(trial);
    let fail = |e: &dyn std::fmt::Display| HarnessError::Trial {
        trial,
        seed,
        message: e.to_string(),
    };
    let mut deployment = scenario.deployment.clone();
    deployment.seed = seed;
    let base = deploy_network(&deployment).map_err(|e| fail(&e))?;
    let mut adv_rng = ChaCha8Rng::seed_from_u64(seed);
    adv_rng.set_stream(ADVERSARY_STREAM);
    let net = apply_adversary(&base, &scenario.adversary, &mut adv_rng).map_err(|e| fail(&e))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(PROTOCOL_STREAM);
    let report = match scenario.protocol {
        Protocol::Dht => {
            let space = RingSpace::new(scenario.bits).map_err(|e| fail(&e))?;
            let overlay = build_overlay(&net, space, scenario.g).map_err(|e| fail(&e))?;
            let cfg = DhtRoundConfig {
                seed: rng.gen(),
                ..scenario.dht_config()
            };
            run_dht_round(&net, &overlay, &cfg, &mut rng).map_err(|e| fail(&e))?
        }
        Protocol::Rde => {
            run_rde_round(&net, &scenario.zone(), 1, &mut rng).map_err(|e| fail(&e))?
        }
    };
    Ok((net, report))
}

pub fn run_trial(scenario: &Scenario, trial: usize) -> Result<TrialResult, HarnessError> {
    let (net, report) = run_trial_report(scenario, trial)?;
    Ok(summarize_trial(
        &net,
        &report,
        trial,
        scenario.trial_seed(trial),
    ))
}

pub fn summarize_trial(
    net: &Network,
    report: &RoundReport,
    trial: usize,
    seed: u64,
) -> TrialResult {
    let cloned = net.cloned_identities();
    let honest: Vec<usize> = net
        .nodes()
        .iter()
        .filter(|n| n.behavior.is_honest())
        .map(|n| n.index)
        .collect();
    let cache_mean = mean(honest.iter().map(|&i| report.storage[i] as f64));
    let (witnesses, detected) = if cloned.is_empty() {
        (0.0, 0.0)
    } else {
        (
            mean(cloned.iter().map(|&id| report.witness_count(id) as f64)),
            mean(
                cloned
                    .iter()
                    .map(|&id| (report.witness_count(id) > 0) as u8 as f64),
            ),
        )
    };
    let dht = report.dht.as_ref().map(|s| DhtTrialStats {
        claims: s.claims(),
        overlay_hops: s.overlay_hops(),
        physical_hops: s.physical_hops(),
        max_overlay_hops: s.traces.iter().map(|t| t.overlay_hops).max().unwrap_or(0),
        predecessor_receipt_probability: s.predecessor_receipt_probability(),
        claims_per_examinee: s.claims_per_examinee(),
    });
    let rde = report.rde.as_ref().map(|s| RdeTrialStats {
        lines: s.lines.len(),
        max_line_messages: s.lines.iter().map(|l| l.messages()).max().unwrap_or(0),
        border_discards: s.border_discards(),
        replicas: s.replicas.len(),
        replicas_caught: s.replicas.iter().filter(|r| r.caught_twin).count(),
        replica_reach_sum: s.replicas.iter().map(|r| r.reach).sum(),
        max_claim_buffer: s.claim_buffer_entries().into_iter().max().unwrap_or(0),
    });
    TrialResult {
        trial,
        seed,
        nodes: net.len(),
        mean_degree: net.mean_degree(),
        messages_per_node: report.messages_per_node(),
        cache_mean,
        witnesses,
        detected,
        evidence_msgs: report.evidence_messages,
        action_msgs: report.action_messages,
        transport_failures: report.transport_failures,
        claims_dropped: report.claims_dropped,
        evidence_count: report.evidence.len(),
        revocations: report.total_revocations(),
        reach_h: report.rde.as_ref().map_or(0.0, |s| s.mean_reach()),
        dht,
        rde,
    }
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, count) = values.fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
    if count == 0 {
        0.0
    } else {
        sum / count as f64
    }
}

/// Mean and population standard deviation.
pub fn mean_stddev(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let m = values.iter().sum::<f64>() / values.len() as f64;
    let var = values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / values.len() as f64;
    (m, var.sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub metric: &'static str,
    pub mean: f64,
    pub stddev: f64,
    pub prediction: Option<f64>,
    pub rel_error: Option<f64>,
}

impl SummaryRow {
    fn new(metric: &'static str, values: &[f64], prediction: Option<f64>) -> Self {
        let (mean, stddev) = mean_stddev(values);
        SummaryRow {
            metric,
            mean,
            stddev,
            prediction,
            rel_error: prediction.and_then(|p| analytic::relative_error(mean, p)),
        }
    }

    fn pooled(metric: &'static str, value: f64, prediction: Option<f64>) -> Self {
        SummaryRow {
            metric,
            mean: value,
            stddev: 0.0,
            prediction,
            rel_error: prediction.and_then(|p| analytic::relative_error(value, p)),
        }
    }
}

/// Aggregates trials sorted by index, so the result does not depend on the
/// order in which they finished.
pub fn summarize(scenario: &Scenario, trials: &[TrialResult]) -> Vec<SummaryRow> {
    let mut sorted: Vec<&TrialResult> = trials.iter().collect();
    sorted.sort_by_key(|t| t.trial);
    let col =
        |f: &dyn Fn(&TrialResult) -> f64| -> Vec<f64> { sorted.iter().map(|t| f(t)).collect() };

    let nodes = mean_stddev(&col(&|t| t.nodes as f64)).0;
    let degree = mean_stddev(&col(&|t| t.mean_degree)).0;
    let mut cost_prediction = None;
    let mut cache_prediction = None;
    let mut witness_prediction = None;
    let mut extra = Vec::new();

    if scenario.protocol == Protocol::Dht {
        let stats: Vec<&DhtTrialStats> = sorted.iter().filter_map(|t| t.dht.as_ref()).collect();
        let claims: usize = stats.iter().map(|s| s.claims).sum();
        let overlay: usize = stats.iter().map(|s| s.overlay_hops).sum();
        let physical: usize = stats.iter().map(|s| s.physical_hops).sum();
        let log_n = nodes.max(2.0).log2();
        let c = if claims > 0 {
            overlay as f64 / claims as f64 / log_n
        } else {
            0.0
        };
        let l = if overlay > 0 {
            physical as f64 / overlay as f64
        } else {
            0.0
        };
        let p_r = mean_stddev(
            &stats
                .iter()
                .map(|s| s.predecessor_receipt_probability)
                .collect::<Vec<_>>(),
        )
        .0;
        let m = mean_stddev(
            &stats
                .iter()
                .map(|s| s.claims_per_examinee)
                .collect::<Vec<_>>(),
        )
        .0;
        if scenario.plan == ClaimPlan::Probabilistic {
            cost_prediction =
                analytic::dht_comm_cost(scenario.p_c, degree, c, l, nodes.round() as usize).ok();
        }
        match scenario.plan {
            ClaimPlan::Exact(m) => {
                if let Ok((s, w)) = analytic::dht_ideal(scenario.g, m) {
                    cache_prediction = Some(s);
                    witness_prediction = (scenario.adversary.cloned_identities > 0).then_some(w);
                }
            }
            ClaimPlan::Probabilistic => {
                cache_prediction = analytic::dht_cache_size_general(scenario.g, p_r, m).ok();
            }
        }
        extra.push(SummaryRow::pooled("overlay_hop_factor_c", c, None));
        extra.push(SummaryRow::pooled(
            "physical_hops_per_overlay_hop_l",
            l,
            None,
        ));
        extra.push(SummaryRow::pooled(
            "predecessor_receipt_probability",
            p_r,
            None,
        ));
        extra.push(SummaryRow::pooled("claims_per_examinee", m, None));
    } else {
        let stats: Vec<&RdeTrialStats> = sorted.iter().filter_map(|t| t.rde.as_ref()).collect();
        let replicas: usize = stats.iter().map(|s| s.replicas).sum();
        if replicas > 0 {
            let caught: usize = stats.iter().map(|s| s.replicas_caught).sum();
            let reach: usize = stats.iter().map(|s| s.replica_reach_sum).sum();
            let h = reach as f64 / replicas as f64;
            extra.push(SummaryRow::pooled(
                "directed_detection",
                caught as f64 / replicas as f64,
                analytic::rde_detection_probability(h.min(nodes), nodes.round() as usize).ok(),
            ));
            extra.push(SummaryRow::pooled("replica_reach_h", h, None));
        }
        extra.push(SummaryRow::new(
            "border_discards",
            &stats
                .iter()
                .map(|s| s.border_discards as f64)
                .collect::<Vec<_>>(),
            None,
        ));
    }

    let mut rows = vec![
        SummaryRow::new(
            "messages_per_node",
            &col(&|t| t.messages_per_node),
            cost_prediction,
        ),
        SummaryRow::new("cache_mean", &col(&|t| t.cache_mean), cache_prediction),
        SummaryRow::new("witnesses", &col(&|t| t.witnesses), witness_prediction),
        SummaryRow::new("detected", &col(&|t| t.detected), None),
        SummaryRow::new("evidence_msgs", &col(&|t| t.evidence_msgs as f64), None),
        SummaryRow::new("action_msgs", &col(&|t| t.action_msgs as f64), None),
        SummaryRow::new(
            "transport_failures",
            &col(&|t| t.transport_failures as f64),
            None,
        ),
        SummaryRow::new("claims_dropped", &col(&|t| t.claims_dropped as f64), None),
        SummaryRow::new("revocations", &col(&|t| t.revocations as f64), None),
        SummaryRow::new("reach_h", &col(&|t| t.reach_h), None),
        SummaryRow::new("mean_degree", &col(&|t| t.mean_degree), None),
    ];
    rows.extend(extra);
    rows
}
