//! Per-run aggregates: mean end-to-end delay and delivered throughput.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::config::ProtocolVariant;
use crate::model::NodeId;
use crate::trace::{Trace, TraceEvent};

/// Arithmetic mean of per-packet delays; `None` when nothing was delivered.
pub fn e2e_delay(samples: &[f64]) -> Option<f64> {
    if samples.is_empty() {
        None
    } else {
        Some(samples.iter().sum::<f64>() / samples.len() as f64)
    }
}

/// Delivered application bits per second. Zero for a zero-length run.
pub fn throughput(delivered_count: u64, packet_size_bits: f64, run_time: f64) -> f64 {
    if run_time > 0.0 {
        delivered_count as f64 * packet_size_bits / run_time
    } else {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub run_time: f64,
    pub packet_size_bits: f64,
    pub generated_count: u64,
    pub delivered_count: u64,
    pub dropped_count: u64,
    pub in_flight_at_end: u64,
    /// Delivery minus generation time per delivered packet, in delivery order.
    pub delay_samples: Vec<f64>,
    pub mean_e2e_delay: Option<f64>,
    pub throughput_bps: f64,
    /// First time each subject was blacklisted by any node.
    pub blacklist_timeline: Vec<(f64, NodeId)>,
}

impl RunMetrics {
    pub fn empty(run_time: f64, packet_size_bits: f64) -> Self {
        RunMetrics {
            run_time,
            packet_size_bits,
            generated_count: 0,
            delivered_count: 0,
            dropped_count: 0,
            in_flight_at_end: 0,
            delay_samples: Vec::new(),
            mean_e2e_delay: None,
            throughput_bps: 0.0,
            blacklist_timeline: Vec::new(),
        }
    }

    pub fn blacklisted_count(&self) -> usize {
        self.blacklist_timeline.len()
    }

    /// Rebuilds the metrics from a trace alone.
    pub fn from_trace(trace: &Trace) -> RunMetrics {
        let mut run_time = 0.0;
        let mut packet_bits = 0.0;
        let mut generated = 0;
        let mut dropped = 0;
        let mut in_flight = 0;
        let mut delays = Vec::new();
        let mut seen = BTreeSet::new();
        let mut timeline = Vec::new();
        for r in trace.records() {
            match &r.event {
                TraceEvent::Start { run_time: rt, packet_bits: pb, .. } => {
                    run_time = *rt;
                    packet_bits = *pb;
                }
                TraceEvent::DataGenerated { .. } => generated += 1,
                TraceEvent::Deliver { gen_t, .. } => delays.push(r.t - gen_t),
                TraceEvent::Drop { .. } => dropped += 1,
                TraceEvent::Blacklist { subject, .. } => {
                    if seen.insert(*subject) {
                        timeline.push((r.t, *subject));
                    }
                }
                TraceEvent::End { in_flight: f, .. } => in_flight = *f,
                _ => {}
            }
        }
        let delivered = delays.len() as u64;
        RunMetrics {
            run_time,
            packet_size_bits: packet_bits,
            generated_count: generated,
            delivered_count: delivered,
            dropped_count: dropped,
            in_flight_at_end: in_flight,
            mean_e2e_delay: e2e_delay(&delays),
            throughput_bps: throughput(delivered, packet_bits, run_time),
            delay_samples: delays,
            blacklist_timeline: timeline,
        }
    }
}

/// One row of a summary table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub variant: ProtocolVariant,
    pub node_count: usize,
    pub seed: u64,
    pub mean_delay_s: Option<f64>,
    pub throughput_bps: Option<f64>,
    pub blacklisted_count: Option<usize>,
    /// `ok`, or `failed: <reason>`.
    pub status: String,
}

impl SummaryRow {
    pub const HEADER: [&'static str; 7] = [
        "variant",
        "node_count",
        "seed",
        "mean_delay_s",
        "throughput_bps",
        "blacklisted_count",
        "status",
    ];

    pub fn from_metrics(variant: ProtocolVariant, node_count: usize, seed: u64, m: &RunMetrics) -> Self {
        SummaryRow {
            variant,
            node_count,
            seed,
            mean_delay_s: m.mean_e2e_delay,
            throughput_bps: Some(m.throughput_bps),
            blacklisted_count: Some(m.blacklisted_count()),
            status: "ok".into(),
        }
    }

    pub fn failed(variant: ProtocolVariant, node_count: usize, seed: u64, reason: &str) -> Self {
        SummaryRow {
            variant,
            node_count,
            seed,
            mean_delay_s: None,
            throughput_bps: None,
            blacklisted_count: None,
            status: format!("failed: {reason}"),
        }
    }

    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }

    /// Field values in [`Self::HEADER`] order; absent values are empty.
    pub fn fields(&self) -> [String; 7] {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        [
            self.variant.to_string(),
            self.node_count.to_string(),
            self.seed.to_string(),
            opt(self.mean_delay_s),
            opt(self.throughput_bps),
            self.blacklisted_count.map(|c| c.to_string()).unwrap_or_default(),
            self.status.clone(),
        ]
    }
}
