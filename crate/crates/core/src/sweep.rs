//! Multi-run sweeps over node counts, seeds and protocol variants.

use std::panic::{catch_unwind, AssertUnwindSafe};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{ProtocolVariant, ScenarioConfig};
use crate::metrics::SummaryRow;
use crate::sim::run;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub node_counts: Vec<usize>,
    pub seeds: Vec<u64>,
    pub variants: Vec<ProtocolVariant>,
}

impl Default for SweepSpec {
    fn default() -> Self {
        SweepSpec {
            node_counts: vec![10, 30, 50, 70, 100],
            seeds: vec![1, 2, 3, 4, 5],
            variants: vec![ProtocolVariant::Proposed, ProtocolVariant::NoTrust],
        }
    }
}

impl SweepSpec {
    /// Names of empty lists, if any.
    pub fn empty_fields(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        if self.node_counts.is_empty() {
            out.push("node_counts");
        }
        if self.seeds.is_empty() {
            out.push("seeds");
        }
        if self.variants.is_empty() {
            out.push("variants");
        }
        out
    }

    pub fn run_count(&self) -> usize {
        self.node_counts.len() * self.seeds.len() * self.variants.len()
    }

    /// Cross product in output order: node count, then variant, then seed.
    pub fn points(&self) -> Vec<(usize, ProtocolVariant, u64)> {
        let mut out = Vec::with_capacity(self.run_count());
        for &n in &self.node_counts {
            for &v in &self.variants {
                for &s in &self.seeds {
                    out.push((n, v, s));
                }
            }
        }
        out
    }
}

/// Seed-averaged metrics for one (variant, node count) point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanRow {
    pub variant: ProtocolVariant,
    pub node_count: usize,
    /// Successful runs averaged.
    pub runs: usize,
    pub mean_delay_s: Option<f64>,
    pub throughput_bps: Option<f64>,
    pub blacklisted_count: Option<f64>,
}

impl MeanRow {
    pub const HEADER: [&'static str; 6] = [
        "variant",
        "node_count",
        "runs",
        "mean_delay_s",
        "throughput_bps",
        "blacklisted_count",
    ];

    pub fn fields(&self) -> [String; 6] {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        [
            self.variant.to_string(),
            self.node_count.to_string(),
            self.runs.to_string(),
            opt(self.mean_delay_s),
            opt(self.throughput_bps),
            opt(self.blacklisted_count),
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub rows: Vec<SummaryRow>,
    pub means: Vec<MeanRow>,
}

impl SweepResult {
    pub fn failed_rows(&self) -> impl Iterator<Item = &SummaryRow> {
        self.rows.iter().filter(|r| !r.is_ok())
    }

    pub fn mean(&self, variant: ProtocolVariant, node_count: usize) -> Option<&MeanRow> {
        self.means
            .iter()
            .find(|m| m.variant == variant && m.node_count == node_count)
    }
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Runs one sweep point, turning errors and panics into a failed row.
pub fn run_point(base: &ScenarioConfig, node_count: usize, variant: ProtocolVariant, seed: u64) -> SummaryRow {
    let cfg = base
        .clone()
        .with_nodes(node_count)
        .with_variant(variant)
        .with_seed(seed);
    match catch_unwind(AssertUnwindSafe(|| run(&cfg))) {
        Ok(Ok(out)) => SummaryRow::from_metrics(variant, node_count, seed, &out.metrics),
        Ok(Err(e)) => SummaryRow::failed(variant, node_count, seed, &e.to_string()),
        Err(panic) => {
            let msg = panic
                .downcast_ref::<String>()
                .map(String::as_str)
                .or_else(|| panic.downcast_ref::<&str>().copied())
                .unwrap_or("panic");
            SummaryRow::failed(variant, node_count, seed, msg)
        }
    }
}

/// Runs the cross product in parallel. Row order is the order of
/// [`SweepSpec::points`] regardless of scheduling.
pub fn run_sweep(base: &ScenarioConfig, spec: &SweepSpec) -> SweepResult {
    let rows: Vec<SummaryRow> = spec
        .points()
        .into_par_iter()
        .map(|(n, v, s)| run_point(base, n, v, s))
        .collect();
    let mut means = Vec::new();
    for &n in &spec.node_counts {
        for &v in &spec.variants {
            let ok: Vec<&SummaryRow> = rows
                .iter()
                .filter(|r| r.node_count == n && r.variant == v && r.is_ok())
                .collect();
            means.push(MeanRow {
                variant: v,
                node_count: n,
                runs: ok.len(),
                mean_delay_s: mean(ok.iter().filter_map(|r| r.mean_delay_s)),
                throughput_bps: mean(ok.iter().filter_map(|r| r.throughput_bps)),
                blacklisted_count: mean(ok.iter().filter_map(|r| r.blacklisted_count.map(|c| c as f64))),
            });
        }
    }
    SweepResult { rows, means }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ScenarioConfig {
        let mut cfg = ScenarioConfig::default();
        cfg.scenario.run_time_s = 5.0;
        cfg.scenario.malicious_count = 1;
        cfg
    }

    #[test]
    fn default_spec_with_two_seeds_has_twenty_points() {
        let spec = SweepSpec {
            seeds: vec![1, 2],
            ..SweepSpec::default()
        };
        assert_eq!(spec.run_count(), 20);
        assert_eq!(spec.points().len(), 20);
    }

    #[test]
    fn one_row_per_variant_for_single_point() {
        let spec = SweepSpec {
            node_counts: vec![10],
            seeds: vec![3],
            variants: vec![ProtocolVariant::Proposed, ProtocolVariant::NoTrust],
        };
        let res = run_sweep(&tiny(), &spec);
        assert_eq!(res.rows.len(), 2);
        assert_eq!(res.means.len(), 2);
        assert!(res.rows.iter().all(SummaryRow::is_ok));
    }

    #[test]
    fn failing_point_is_isolated() {
        let spec = SweepSpec {
            // Two nodes cannot host one malicious plus the default flows; one
            // node with one malicious is rejected by validation.
            node_counts: vec![1, 10],
            seeds: vec![1],
            variants: vec![ProtocolVariant::Proposed],
        };
        let res = run_sweep(&tiny(), &spec);
        assert_eq!(res.rows.len(), 2);
        assert!(!res.rows[0].is_ok());
        assert!(res.rows[1].is_ok());
        assert_eq!(res.failed_rows().count(), 1);
    }

    #[test]
    fn empty_lists_are_named() {
        let spec = SweepSpec {
            node_counts: vec![],
            seeds: vec![1],
            variants: vec![],
        };
        assert_eq!(spec.empty_fields(), ["node_counts", "variants"]);
    }
}
