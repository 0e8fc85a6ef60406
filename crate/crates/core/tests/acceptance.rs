//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use clonesim::chord_overlay::{build_overlay, owner_oracle, OverlayError, OverlayHop};
use clonesim::dht_detection::{ClaimPlan, Transport};
use clonesim::harness::{run_experiment, run_trial_report, sweep, Experiment, Scenario};
use clonesim::identity::RingSpace;
use clonesim::net_model::{deploy_network, DeploymentConfig};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn jobs() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn summary(exp: &Experiment, metric: &str) -> (f64, Option<f64>) {
    let row = exp
        .summary
        .iter()
        .find(|r| r.metric == metric)
        .unwrap_or_else(|| panic!("missing metric {metric}"));
    (row.mean, row.prediction)
}

fn scenario(text: &str) -> Scenario {
    Scenario::parse(text).expect("acceptance scenario parses")
}

fn chord_oracle() -> Outcome {
    let start = Instant::now();
    let space = RingSpace::new(16).unwrap();
    let (n, bound_base) = (64usize, 6usize);
    let mut routes = 0usize;
    let mut wrong = 0usize;
    let mut over = 0usize;
    let mut worst = 0usize;
    for &g in &[2usize, 8] {
        // First deployment seed whose identities do not collide on a 16-bit ring.
        let overlay = (0u64..)
            .find_map(|seed| {
                let net =
                    deploy_network(&DeploymentConfig::with_degree(n, 1000.0, 10.0, seed)).ok()?;
                match build_overlay(&net, space, g) {
                    Ok(ov) => Some(ov),
                    Err(OverlayError::PointCollision { .. }) => None,
                    Err(e) => panic!("overlay build failed: {e}"),
                }
            })
            .unwrap();
        let ring = overlay.points();
        let mut rng = ChaCha8Rng::seed_from_u64(g as u64);
        for _ in 0..16 {
            let origin = overlay.ring()[rng.gen_range(0..overlay.len())].id;
            for _ in 0..10_000 {
                let key = space.point(rng.gen());
                let mut at = origin;
                let mut hops = 0;
                loop {
                    match overlay.next_hop(at, key).unwrap() {
                        OverlayHop::Destination => break,
                        OverlayHop::PreDestination(next) | OverlayHop::Next(next) => {
                            at = next;
                            hops += 1;
                        }
                    }
                    if hops > 4 * n {
                        break;
                    }
                }
                routes += 1;
                worst = worst.max(hops);
                if at != owner_oracle(&ring, &space, key) {
                    wrong += 1;
                }
                if hops > bound_base + g {
                    over += 1;
                }
            }
        }
    }
    let elapsed = start.elapsed();
    outcome(
        wrong == 0 && over == 0 && elapsed < Duration::from_secs(10),
        format!(
            "{routes} routes, {wrong} wrong owners, {over} over the hop bound (worst {worst}), {:.2}s",
            elapsed.as_secs_f64()
        ),
    )
}

fn dht_deterministic_detection() -> Outcome {
    let start = Instant::now();
    let mut sc = scenario(
        "protocol=dht\nn=1000\ntarget_degree=10\nclones=1\nreplicas=2\np_c=1\ntrials=100\n",
    );
    let exp = run_experiment(&sc, jobs()).unwrap();
    let detected = exp.trials.iter().filter(|t| t.detected == 1.0).count();
    let failures = summary(&exp, "transport_failures").0;
    let elapsed = start.elapsed();
    sc.transport = Transport::ShortestPath;
    let reference = run_experiment(&sc, jobs()).unwrap();
    let reference_detected = reference
        .trials
        .iter()
        .filter(|t| t.detected == 1.0)
        .count();
    outcome(
        detected == 100 && elapsed < Duration::from_secs(120),
        format!(
            "detected in {detected}/100 trials, {failures:.0} greedy transport failures per trial, {:.1}s \
             (shortest-path reference transport: {reference_detected}/100)",
            elapsed.as_secs_f64()
        ),
    )
}

fn dht_ideal_formulas() -> Outcome {
    let (worst, cells) = ideal_formula_cells(Transport::Greedy);
    let (reference, _) = ideal_formula_cells(Transport::ShortestPath);
    outcome(
        worst <= 0.15,
        format!(
            "worst relative error {worst:.3} (shortest-path reference transport: {reference:.3}); {}",
            cells.join("; ")
        ),
    )
}

fn ideal_formula_cells(transport: Transport) -> (f64, Vec<String>) {
    let mut worst: f64 = 0.0;
    let mut cells = Vec::new();
    for &g in &[10usize, 20] {
        for &m in &[5usize, 10, 20] {
            let mut sc = scenario(&format!(
                "protocol=dht\nn=1000\ntarget_degree=10\nclones=1\nreplicas=2\ng={g}\ntrials=200\nbase_seed={}\n",
                1000 * g + m
            ));
            sc.plan = ClaimPlan::Exact(m);
            sc.transport = transport;
            let exp = run_experiment(&sc, jobs()).unwrap();
            let (s, s_pred) = summary(&exp, "cache_mean");
            let (w, w_pred) = summary(&exp, "witnesses");
            let (s_pred, w_pred) = (s_pred.unwrap(), w_pred.unwrap());
            let es = (s - s_pred).abs() / s_pred;
            let ew = (w - w_pred).abs() / w_pred;
            worst = worst.max(es).max(ew);
            cells.push(format!(
                "g={g},m={m}: s {s:.2}/{s_pred:.2} w {w:.2}/{w_pred:.2}"
            ));
        }
    }
    (worst, cells)
}

fn dht_dropper_resilience() -> Outcome {
    let mut sc = scenario(
        "protocol=dht\nn=1000\ntarget_degree=10\nclones=1\nreplicas=2\np_c=1\ng=10\n\
         dropper_fraction=0.10\ntrials=100\nbase_seed=4000\n",
    );
    let exp = run_experiment(&sc, jobs()).unwrap();
    let rate = summary(&exp, "detected").0;
    sc.transport = Transport::ShortestPath;
    let reference = summary(&run_experiment(&sc, jobs()).unwrap(), "detected").0;
    outcome(
        rate >= 0.90,
        format!("detection rate {rate:.2} over 100 trials (shortest-path reference transport: {reference:.2})"),
    )
}

fn dht_cost_scaling() -> Outcome {
    let sc =
        scenario("protocol=dht\nn=1000\ntarget_degree=10\np_c=0.3\ntrials=8\nbase_seed=5000\n");
    let ns = ["250", "500", "1000", "2000"].map(String::from);
    let runs = sweep(&sc, "n", &ns, jobs()).unwrap();
    let mut ok = true;
    let mut parts = Vec::new();
    let mut costs = Vec::new();
    for (n, exp) in &runs {
        let (cost, pred) = summary(exp, "messages_per_node");
        let pred = pred.unwrap();
        let c = summary(exp, "overlay_hop_factor_c").0;
        let err = (cost - pred).abs() / pred;
        ok &= c < 1.0 && err <= 0.25;
        costs.push((n.parse::<f64>().unwrap(), cost));
        parts.push(format!(
            "n={n}: cost {cost:.1} pred {pred:.1} err {err:.3} c {c:.2}"
        ));
    }
    // Growth between log^2 n and sqrt(n) log n.
    let lower: Vec<f64> = costs.iter().map(|(n, m)| m / n.log2().powi(2)).collect();
    let upper: Vec<f64> = costs
        .iter()
        .map(|(n, m)| m / (n.sqrt() * n.log2()))
        .collect();
    let rising = lower.windows(2).all(|w| w[1] >= w[0]);
    let falling = upper.windows(2).all(|w| w[1] <= w[0]);
    parts.push(format!(
        "cost/log^2 n non-decreasing: {rising}, cost/(sqrt n log n) non-increasing: {falling}"
    ));
    outcome(ok && rising && falling, parts.join("; "))
}

fn rde_hop_budget() -> Outcome {
    let sc = scenario("protocol=rde\nn=1000\ntarget_degree=10\nr=1\ntrials=20\nbase_seed=6000\n");
    let ttl = sc.ttl() as usize;
    let mut max_line = 0;
    let mut borders = 0;
    let mut per_node = Vec::new();
    for trial in 0..sc.trials {
        let (_, report) = run_trial_report(&sc, trial).unwrap();
        let stats = report.rde.as_ref().unwrap();
        max_line = max_line.max(stats.lines.iter().map(|l| l.messages()).max().unwrap_or(0));
        borders += stats.border_discards();
        per_node.push(report.messages_per_node());
    }
    let mean = per_node.iter().sum::<f64>() / per_node.len() as f64;
    let root = (sc.deployment.n as f64).sqrt();
    outcome(
        max_line <= ttl && mean <= root && borders > 0,
        format!("max line {max_line} <= ttl {ttl}, mean messages/node {mean:.2} <= {root:.2}, border discards {borders}"),
    )
}

fn rde_detection_consistency() -> Outcome {
    let sc = scenario("protocol=rde\nn=1000\ntarget_degree=10\nclones=1\nreplicas=2\nr=1\ntrials=300\nbase_seed=7000\n");
    let exp = run_experiment(&sc, jobs()).unwrap();
    let (rate, predicted) = summary(&exp, "directed_detection");
    let predicted = predicted.unwrap();
    let overall = summary(&exp, "detected").0;
    outcome(
        (rate - predicted).abs() <= 0.05,
        format!(
            "per-replica detection {rate:.3} vs h/n {predicted:.3} (|diff| {:.3}); identity-level detection {overall:.3}",
            (rate - predicted).abs()
        ),
    )
}

fn rde_memory() -> Outcome {
    let sc =
        scenario("protocol=rde\nn=1000\ntarget_degree=10\nclones=2\ntrials=10\nbase_seed=8000\n");
    let mut buffered = 0;
    let mut mismatched = 0;
    for trial in 0..sc.trials {
        let (_, report) = run_trial_report(&sc, trial).unwrap();
        let stats = report.rde.as_ref().unwrap();
        buffered += stats.claim_buffer_entries().iter().sum::<usize>();
        mismatched += stats
            .peak_state_entries
            .iter()
            .zip(stats.neighbor_entries.iter().zip(&stats.evidence_entries))
            .filter(|(&p, (&nl, &ev))| p != nl + ev)
            .count();
    }
    outcome(
        buffered == 0 && mismatched == 0,
        format!("claim-buffer entries {buffered}, nodes whose peak differs from list+evidence {mismatched}"),
    )
}

fn soundness() -> Outcome {
    let configs = [
        "protocol=dht\nn=300\np_c=1\ng=5\ntrials=100\nbase_seed=9000\n",
        "protocol=dht\nn=300\np_c=0.5\ng=10\ndropper_fraction=0.1\ntrials=100\nbase_seed=9100\n",
        "protocol=dht\nn=300\nradio_range=110\nb=32\ndropper_fraction=0.1\nmodify_enabled=true\ntrials=50\nbase_seed=9200\n",
        "protocol=rde\nn=300\ntrials=100\nbase_seed=9300\n",
        "protocol=rde\nn=300\nr=3\nttl=10\ndropper_fraction=0.1\nmodify_enabled=true\ntrials=100\nbase_seed=9400\n",
        "protocol=rde\nn=300\ntheta_t=1.0\ntheta_p=0.2\ntrials=50\nbase_seed=9500\n",
    ];
    let mut trials = 0;
    let mut evidence = 0;
    let mut revocations = 0;
    for text in configs {
        let sc = scenario(text);
        for trial in 0..sc.trials {
            let (_, report) = run_trial_report(&sc, trial).unwrap();
            trials += 1;
            evidence += report.evidence.len();
            revocations += report.total_revocations();
        }
    }
    outcome(
        trials >= 500 && evidence == 0 && revocations == 0,
        format!("{trials} clone-free trials, {evidence} evidence, {revocations} revocations"),
    )
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let mut outputs = Vec::new();
    for (name, text) in [
        (
            "dht",
            "protocol=dht\nn=400\nclones=2\np_c=0.5\ntrials=6\nbase_seed=11\n",
        ),
        (
            "rde",
            "protocol=rde\nn=400\nclones=2\ntrials=6\nbase_seed=12\n",
        ),
    ] {
        let path = dir.path().join(format!("{name}.txt"));
        std::fs::write(&path, text).unwrap();
        let mut files = Vec::new();
        for jobs in [1, 2, 4] {
            let out = dir.path().join(format!("{name}-{jobs}"));
            let status = Command::new(env!("CARGO_BIN_EXE_clonesim"))
                .args(["run", "--scenario"])
                .arg(&path)
                .arg("--out")
                .arg(&out)
                .args(["--jobs", &jobs.to_string()])
                .status()
                .unwrap();
            assert!(status.success());
            files.push(std::fs::read(out.join("metrics.csv")).unwrap());
        }
        outputs.push(files.windows(2).all(|w| w[0] == w[1]));
    }
    outcome(
        outputs.iter().all(|&same| same),
        format!(
            "metrics.csv identical across --jobs 1/2/4: dht {}, rde {}",
            outputs[0], outputs[1]
        ),
    )
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("chord routing matches the ownership oracle", chord_oracle),
        (
            "DHT detects a single clone with p_c = 1",
            dht_deterministic_detection,
        ),
        (
            "DHT cache size and witness count track the ideal formulas",
            dht_ideal_formulas,
        ),
        (
            "DHT detection survives 10% droppers",
            dht_dropper_resilience,
        ),
        ("DHT cost fits p_c d c l log2 n", dht_cost_scaling),
        ("RDE hop budget, cost and border discards", rde_hop_budget),
        ("RDE detection rate matches h/n", rde_detection_consistency),
        ("RDE nodes buffer no claims", rde_memory),
        ("no evidence without clones", soundness),
        ("metrics.csv independent of --jobs", determinism),
    ];
    let mut failed = 0;
    for (k, (name, check)) in criteria.iter().enumerate() {
        let result = check();
        let tag = if result.pass { "PASS" } else { "FAIL" };
        println!("{tag} criterion {}: {name}: {}", k + 1, result.detail);
        if !result.pass {
            failed += 1;
        }
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
