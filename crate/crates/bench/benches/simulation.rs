use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use crsn_core::verify::{run_suite, SuiteParams};
use crsn_core::{run, ProtocolVariant, ScenarioConfig};

fn short(nodes: usize, variant: ProtocolVariant) -> ScenarioConfig {
    let mut cfg = ScenarioConfig::default().with_nodes(nodes).with_variant(variant);
    cfg.scenario.run_time_s = 20.0;
    cfg
}

fn bench(c: &mut Criterion) {
    let mut group = c.benchmark_group("run_20s");
    group.sample_size(10);
    for nodes in [30, 100] {
        for variant in [ProtocolVariant::Proposed, ProtocolVariant::NoTrust] {
            let cfg = short(nodes, variant);
            group.bench_function(format!("{variant}/{nodes}"), |b| b.iter(|| run(black_box(&cfg)).unwrap().metrics.delivered_count));
        }
    }
    group.finish();
    c.bench_function("formula_suite", |b| b.iter(|| run_suite(black_box(&SuiteParams::default())).len()));
}

criterion_group!(benches, bench);
criterion_main!(benches);
