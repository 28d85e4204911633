//! Acceptance checks. Runs as a plain binary so every criterion prints its
//! own line; exits nonzero if any fails.

use std::collections::{BTreeMap, BTreeSet};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crsn_core::config::ClusterMode;
use crsn_core::delay::{switching_delay, SwitchInputs};
use crsn_core::model::{ChannelSet, NodeState, Position};
use crsn_core::sim::drop_observers;
use crsn_core::sweep::{run_sweep, SweepSpec};
use crsn_core::verify::{run_suite, SuiteParams};
use crsn_core::{
    merge_ledgers, run, select_route, ChannelId, IfValue, LinkMetrics, NodeId, ProtocolVariant,
    RouteEntry, ScenarioConfig, Timestamp, TraceEvent, TrustLedger,
};

const SWEEP_NODES: [usize; 5] = [10, 30, 50, 70, 100];
const TREND_SLACK: f64 = 0.05;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn formula_suite() -> Verdict {
    let start = Instant::now();
    let checks = run_suite(&SuiteParams::default());
    let elapsed = start.elapsed();
    let failed: Vec<String> = checks
        .iter()
        .filter(|c| !c.passed())
        .map(|c| format!("{} ({})", c.formula, c.case))
        .collect();
    let fast = elapsed < Duration::from_secs(1);
    verdict(
        failed.is_empty() && fast,
        format!(
            "{}/{} rows within 1e-9 relative, {:.1} ms (limit 1 s){}",
            checks.len() - failed.len(),
            checks.len(),
            elapsed.as_secs_f64() * 1e3,
            if failed.is_empty() { String::new() } else { format!("; failing: {}", failed.join(", ")) }
        ),
    )
}

fn switching_constant() -> Verdict {
    let d = switching_delay(&SwitchInputs {
        from_channel: ChannelId(1),
        to_channel: ChannelId(2),
        per_step_delay: 0.010,
    });
    verdict(d == 0.010, format!("one 10 MHz step at a = 10 ms gives {d} s (exact 0.01 required)"))
}

fn trust_threshold() -> Verdict {
    // Subject 0 in the middle, neighbors 1..=4 within range.
    let range = 15.0;
    let spots = [(0.0, 0.0), (10.0, 0.0), (-10.0, 0.0), (0.0, 10.0), (0.0, -10.0)];
    let nodes: Vec<NodeState> = spots
        .iter()
        .enumerate()
        .map(|(i, &(x, y))| {
            let mut n = NodeState::new(NodeId(i as u32), Position::new(x, y), ChannelSet::full(4));
            n.is_malicious = i == 0;
            n
        })
        .collect();
    let subject = NodeId(0);
    let neighbors = nodes
        .iter()
        .filter(|n| n.id != subject && n.pos.distance(nodes[0].pos) <= range)
        .count() as u32;
    let blacklisted_after = |reporters: usize| {
        let mut ledger = TrustLedger::new();
        ledger.observe_neighbor_count(subject, Timestamp(0.0), neighbors);
        for r in 1..=reporters {
            ledger
                .record_report(subject, NodeId(r as u32), Timestamp(r as f64))
                .expect("reporter differs from subject");
        }
        ledger.is_blacklisted(subject)
    };
    // Sender 1 forwards to 0; 1, 3 and 4 see both ends, 2 does not see 1.
    let witnesses = drop_observers(&nodes, subject, NodeId(1), range);
    let two = blacklisted_after(2);
    let three = blacklisted_after(3);
    verdict(
        neighbors == 4 && !two && three && witnesses.len() == 3,
        format!(
            "{neighbors} neighbors; 2 reports -> blacklisted={two}, 3 reports -> blacklisted={three}, drop witnessed by {}",
            witnesses.len()
        ),
    )
}

fn blacklist_exclusion() -> Verdict {
    let start = Instant::now();
    let mut base = ScenarioConfig::default();
    base.scenario.node_count = 50;
    base.scenario.malicious_count = 5;
    base.trust.drop_probability = 1.0;
    let per_run: Vec<Result<(usize, usize, usize), String>> = (1..=50u64)
        .into_par_iter()
        .map(|seed| {
            let out = run(&base.clone().with_seed(seed)).map_err(|e| format!("seed {seed}: {e}"))?;
            let mut banned: BTreeMap<NodeId, BTreeSet<NodeId>> = BTreeMap::new();
            let (mut selects, mut blacklists, mut violations) = (0, 0, 0);
            for rec in out.trace.records() {
                match &rec.event {
                    TraceEvent::Blacklist { observer, subject } => {
                        blacklists += 1;
                        banned.entry(*observer).or_default().insert(*subject);
                    }
                    TraceEvent::RouteSelect { node, path, .. } => {
                        selects += 1;
                        if let Some(b) = banned.get(node) {
                            violations += path.iter().filter(|n| b.contains(n)).count();
                        }
                    }
                    _ => {}
                }
            }
            Ok((selects, blacklists, violations))
        })
        .collect();
    let elapsed = start.elapsed();
    let errors: Vec<&String> = per_run.iter().filter_map(|r| r.as_ref().err()).collect();
    let (selects, blacklists, violations) = per_run
        .iter()
        .filter_map(|r| r.as_ref().ok())
        .fold((0, 0, 0), |a, b| (a.0 + b.0, a.1 + b.1, a.2 + b.2));
    let fast = elapsed < Duration::from_secs(120);
    verdict(
        errors.is_empty() && violations == 0 && blacklists > 0 && fast,
        format!(
            "50 runs: {selects} route selections, {blacklists} blacklist events, {violations} selections through a node the selector had blacklisted, {:.1} s (limit 120 s){}",
            elapsed.as_secs_f64(),
            if errors.is_empty() { String::new() } else { format!("; errors: {errors:?}") }
        ),
    )
}

/// Independent scoring for the oracle: recomputed from raw link inputs.
fn oracle_score(links: &[(f64, f64, u32, f64)]) -> f64 {
    let mut sum = 0.0;
    for &(xi, delay, cn, if_value) in links {
        if if_value.is_infinite() {
            return 0.0;
        }
        let v = (xi / delay).powi(cn as i32) / if_value;
        if v == 0.0 {
            return 0.0;
        }
        sum += v;
    }
    sum
}

fn simple_paths(adj: &[Vec<usize>], at: usize, dst: usize, path: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
    if at == dst {
        out.push(path.clone());
        return;
    }
    for &next in &adj[at] {
        if !path.contains(&next) {
            path.push(next);
            simple_paths(adj, next, dst, path, out);
            path.pop();
        }
    }
}

fn route_oracle() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut agree, mut with_paths) = (0, 0);
    let mut mismatches = Vec::new();
    for graph in 0..200 {
        let n = rng.random_range(2..=8usize);
        let mut adj = vec![Vec::new(); n];
        let mut link = BTreeMap::new();
        for a in 0..n {
            for b in (a + 1)..n {
                if rng.random_bool(0.5) {
                    adj[a].push(b);
                    adj[b].push(a);
                    let if_value = match rng.random_range(0..6) {
                        0 => f64::INFINITY,
                        k => (k as f64 - 1.0).exp(),
                    };
                    let m = (rng.random_range(0.1..10.0), rng.random_range(0.001..0.5), rng.random_range(1..=4u32), if_value);
                    link.insert((a, b), m);
                    link.insert((b, a), m);
                }
            }
        }
        let mut paths = Vec::new();
        simple_paths(&adj, 0, n - 1, &mut vec![0], &mut paths);
        let entries: Vec<RouteEntry> = paths
            .iter()
            .map(|p| {
                let links = p
                    .windows(2)
                    .map(|w| {
                        let (xi, d, cn, f) = link[&(w[0], w[1])];
                        let iv = if f.is_infinite() { IfValue::Infinite } else { IfValue::Finite(f) };
                        LinkMetrics::new(xi, d, cn, iv).expect("valid link")
                    })
                    .collect();
                RouteEntry::new(p.iter().map(|&i| NodeId(i as u32)).collect(), links, Timestamp(0.0))
                    .expect("valid path")
            })
            .collect();
        let expected = paths
            .iter()
            .map(|p| {
                let raw: Vec<_> = p.windows(2).map(|w| link[&(w[0], w[1])]).collect();
                (oracle_score(&raw), p)
            })
            .filter(|(s, _)| *s > 0.0)
            .max_by(|(sa, pa), (sb, pb)| {
                sa.total_cmp(sb).then(pb.len().cmp(&pa.len())).then(pb.cmp(pa))
            })
            .map(|(_, p)| p.iter().map(|&i| NodeId(i as u32)).collect::<Vec<_>>());
        let got = select_route(&entries).ok().map(|e| e.path.clone());
        if !paths.is_empty() {
            with_paths += 1;
        }
        if got == expected {
            agree += 1;
        } else {
            mismatches.push(graph);
        }
    }
    verdict(
        agree == 200,
        format!("{agree}/200 graphs agree with exhaustive enumeration ({with_paths} had a path){}", if mismatches.is_empty() { String::new() } else { format!("; mismatched graphs {mismatches:?}") }),
    )
}

fn random_ledger(rng: &mut ChaCha8Rng) -> TrustLedger {
    let mut l = TrustLedger::new();
    for _ in 0..rng.random_range(0..12) {
        let subject = NodeId(rng.random_range(0..8));
        match rng.random_range(0..2) {
            0 => l.observe_neighbor_count(subject, Timestamp(f64::from(rng.random_range(0..5u32))), rng.random_range(0..7)),
            _ => {
                let reporter = NodeId(rng.random_range(0..8));
                if reporter != subject {
                    l.record_report(subject, reporter, Timestamp(0.0)).expect("distinct nodes");
                }
            }
        }
    }
    l
}

fn ledger_semilattice() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut passed = 0;
    for _ in 0..1000 {
        let (a, b, c) = (random_ledger(&mut rng), random_ledger(&mut rng), random_ledger(&mut rng));
        let commutative = merge_ledgers(&a, &b) == merge_ledgers(&b, &a);
        let associative = merge_ledgers(&merge_ledgers(&a, &b), &c) == merge_ledgers(&a, &merge_ledgers(&b, &c));
        let idempotent = merge_ledgers(&a, &a) == a;
        if commutative && associative && idempotent {
            passed += 1;
        }
    }
    verdict(passed == 1000, format!("{passed}/1000 triples commutative, associative and idempotent"))
}

/// At most one adjacent decrease, and that one within `TREND_SLACK`.
fn near_monotone(values: &[f64]) -> bool {
    let drops: Vec<f64> = values
        .windows(2)
        .filter(|w| w[1] < w[0])
        .map(|w| (w[0] - w[1]) / w[0])
        .collect();
    drops.len() <= 1 && drops.iter().all(|d| *d <= TREND_SLACK)
}

fn fmt_series(values: &[f64], scale: f64) -> String {
    values
        .iter()
        .map(|v| format!("{:.4}", v * scale))
        .collect::<Vec<_>>()
        .join(", ")
}

fn sweep_criteria() -> [Verdict; 3] {
    let start = Instant::now();
    let spec = SweepSpec {
        node_counts: SWEEP_NODES.to_vec(),
        seeds: vec![1, 2, 3, 4, 5],
        variants: vec![ProtocolVariant::Proposed, ProtocolVariant::NoTrust],
    };
    let result = run_sweep(&ScenarioConfig::default(), &spec);
    let elapsed = start.elapsed();
    let failed = result.failed_rows().count();
    let series = |v: ProtocolVariant, pick: fn(&crsn_core::sweep::MeanRow) -> Option<f64>| -> Vec<f64> {
        SWEEP_NODES
            .iter()
            .map(|&n| result.mean(v, n).and_then(pick).unwrap_or(f64::NAN))
            .collect()
    };
    let delay_p = series(ProtocolVariant::Proposed, |m| m.mean_delay_s);
    let delay_n = series(ProtocolVariant::NoTrust, |m| m.mean_delay_s);
    let thr_p = series(ProtocolVariant::Proposed, |m| m.throughput_bps);
    let thr_n = series(ProtocolVariant::NoTrust, |m| m.throughput_bps);
    let complete = failed == 0 && delay_p.iter().chain(&delay_n).chain(&thr_p).chain(&thr_n).all(|v| v.is_finite());
    let fast = elapsed < Duration::from_secs(600);

    let c7 = verdict(
        complete && fast && near_monotone(&delay_p),
        format!(
            "proposed mean delay over {SWEEP_NODES:?} nodes, 5 seeds: [{}] s; {failed} failed runs; {:.1} s (limit 600 s)",
            fmt_series(&delay_p, 1.0),
            elapsed.as_secs_f64()
        ),
    );
    let ordered = delay_p.iter().zip(&delay_n).all(|(p, n)| p >= n);
    let c8 = verdict(
        complete && ordered,
        format!("proposed [{}] s vs no_trust [{}] s", fmt_series(&delay_p, 1.0), fmt_series(&delay_n, 1.0)),
    );
    let thr_ordered = thr_p.iter().zip(&thr_n).all(|(p, n)| p >= n);
    let c9 = verdict(
        complete && near_monotone(&thr_p) && thr_ordered,
        format!(
            "throughput proposed [{}] kb/s vs no_trust [{}] kb/s",
            fmt_series(&thr_p, 1e-3),
            fmt_series(&thr_n, 1e-3)
        ),
    );
    [c7, c8, c9]
}

fn determinism() -> Verdict {
    let mut short = ScenarioConfig::default();
    short.scenario.run_time_s = 30.0;
    let mut fixed = short.clone().with_nodes(70).with_seed(11);
    fixed.spectrum.cluster_mode = ClusterMode::Fixed;
    fixed.spectrum.fixed_cluster_count = 7;
    let configs = [
        ("default", short.clone()),
        ("no_trust, 30 nodes", short.clone().with_nodes(30).with_variant(ProtocolVariant::NoTrust).with_seed(7)),
        ("fixed clusters, 70 nodes", fixed),
    ];
    let mut same = 0;
    let mut notes = Vec::new();
    for (name, cfg) in &configs {
        let a = run(cfg).map(|o| o.trace.hash_hex());
        let b = run(cfg).map(|o| o.trace.hash_hex());
        match (a, b) {
            (Ok(a), Ok(b)) if a == b => {
                same += 1;
                notes.push(format!("{name}: {}", &a[..12]));
            }
            (a, b) => notes.push(format!("{name}: {a:?} vs {b:?}")),
        }
    }
    verdict(same == configs.len(), format!("{same}/3 configs hash identically ({})", notes.join("; ")))
}

fn main() -> ExitCode {
    let [c7, c8, c9] = sweep_criteria();
    let results = [
        ("formula suite", formula_suite()),
        ("switching constant", switching_constant()),
        ("trust threshold", trust_threshold()),
        ("blacklist exclusion", blacklist_exclusion()),
        ("route-selection oracle", route_oracle()),
        ("ledger semilattice", ledger_semilattice()),
        ("delay trend", c7),
        ("delay ordering", c8),
        ("throughput trend and ordering", c9),
        ("determinism", determinism()),
    ];
    let mut failures = 0;
    for (i, (name, v)) in results.iter().enumerate() {
        println!("[{}] criterion {}: {name}: {}", if v.pass { "PASS" } else { "FAIL" }, i + 1, v.detail);
        if !v.pass {
            failures += 1;
        }
    }
    println!("{} of {} criteria passed", results.len() - failures, results.len());
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
