use std::collections::BTreeSet;

use crsn_core::{run, NodeId, ProtocolVariant, RunMetrics, ScenarioConfig, Trace, TraceEvent};

fn short(nodes: usize, variant: ProtocolVariant, seed: u64) -> ScenarioConfig {
    let mut cfg = ScenarioConfig::default()
        .with_nodes(nodes)
        .with_variant(variant)
        .with_seed(seed);
    cfg.scenario.run_time_s = 40.0;
    cfg.trust.drop_probability = 1.0;
    cfg
}

fn malicious_set(trace: &Trace) -> BTreeSet<NodeId> {
    match &trace.records()[0].event {
        TraceEvent::Start { malicious, .. } => malicious.iter().copied().collect(),
        other => panic!("trace starts with {other:?}"),
    }
}

#[test]
fn trace_survives_jsonl_round_trip() {
    let out = run(&short(30, ProtocolVariant::Proposed, 3)).unwrap();
    let parsed = Trace::parse_jsonl(&out.trace.to_jsonl()).unwrap();
    assert_eq!(parsed, out.trace);
    assert_eq!(parsed.hash_hex(), out.trace.hash_hex());
    assert_eq!(RunMetrics::from_trace(&parsed), out.metrics);
}

#[test]
fn every_packet_is_accounted_for() {
    for variant in [ProtocolVariant::Proposed, ProtocolVariant::NoTrust] {
        for seed in 1..=3 {
            let m = run(&short(40, variant, seed)).unwrap().metrics;
            assert!(m.generated_count > 0);
            assert_eq!(
                m.generated_count,
                m.delivered_count + m.dropped_count + m.in_flight_at_end,
                "{variant} seed {seed}"
            );
        }
    }
}

#[test]
fn only_droppers_are_blacklisted() {
    let out = run(&short(50, ProtocolVariant::Proposed, 2)).unwrap();
    let bad = malicious_set(&out.trace);
    let convicted: BTreeSet<NodeId> = out.metrics.blacklist_timeline.iter().map(|(_, n)| *n).collect();
    assert!(!convicted.is_empty());
    assert!(convicted.is_subset(&bad), "{convicted:?} not within {bad:?}");
}

#[test]
fn baseline_never_reports_or_blacklists() {
    let out = run(&short(50, ProtocolVariant::NoTrust, 2)).unwrap();
    assert!(out.trace.records().iter().all(|r| !matches!(
        r.event,
        TraceEvent::Report { .. } | TraceEvent::Blacklist { .. } | TraceEvent::Warning { .. }
    )));
    assert_eq!(out.metrics.blacklisted_count(), 0);
}

#[test]
fn different_seeds_diverge() {
    let a = run(&short(20, ProtocolVariant::Proposed, 1)).unwrap();
    let b = run(&short(20, ProtocolVariant::Proposed, 2)).unwrap();
    assert_ne!(a.trace.hash_hex(), b.trace.hash_hex());
}

#[test]
fn config_round_trips_through_toml() {
    let cfg = short(70, ProtocolVariant::NoTrust, 9);
    let back = ScenarioConfig::from_toml_str(&cfg.to_toml_string()).unwrap();
    assert_eq!(back, cfg);
    assert_eq!(run(&back).unwrap().trace.hash_hex(), run(&cfg).unwrap().trace.hash_hex());
}
