//! Run trace: one newline-delimited JSON record per processed event.
//!
//! Each line is an object with the simulation time `t`, the event `kind`, and
//! kind-specific fields. The trace is the source of truth for run metrics;
//! see [`crate::metrics::RunMetrics::from_trace`].

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::model::NodeId;
use crate::routing::ControlKind;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSnapshot {
    pub head: NodeId,
    pub members: Vec<NodeId>,
    pub common: Vec<u16>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TraceEvent {
    Start {
        variant: String,
        node_count: usize,
        seed: u64,
        run_time: f64,
        packet_bits: f64,
        malicious: Vec<NodeId>,
    },
    MobilityTick {
        tick: u64,
    },
    PuToggle {
        pu: u32,
        channel: u16,
        on: bool,
    },
    Recluster {
        trigger: String,
        clusters: Vec<ClusterSnapshot>,
    },
    DataGenerated {
        packet: u64,
        src: NodeId,
        dst: NodeId,
    },
    DataForward {
        packet: u64,
        node: NodeId,
        next: NodeId,
    },
    Deliver {
        packet: u64,
        src: NodeId,
        dst: NodeId,
        gen_t: f64,
        hops: usize,
    },
    Drop {
        packet: u64,
        node: NodeId,
        reason: String,
    },
    /// A control transmission by `node`, heard by `receivers` nodes.
    Control {
        node: NodeId,
        msg: ControlKind,
        receivers: usize,
    },
    RreqSend {
        node: NodeId,
        origin: NodeId,
        seq: u64,
        dst: NodeId,
    },
    RrepSend {
        node: NodeId,
        source: NodeId,
        seq: u64,
        path: Vec<NodeId>,
        score: f64,
    },
    RouteDiscovered {
        node: NodeId,
        dst: NodeId,
        path: Vec<NodeId>,
        score: f64,
    },
    RouteSelect {
        node: NodeId,
        dst: NodeId,
        path: Vec<NodeId>,
        score: f64,
    },
    RouteFailure {
        node: NodeId,
        dst: NodeId,
        retry: bool,
    },
    Report {
        observer: NodeId,
        subject: NodeId,
        rn: usize,
    },
    Blacklist {
        observer: NodeId,
        subject: NodeId,
    },
    Warning {
        node: NodeId,
        subject: NodeId,
    },
    /// Merged honest ledger: `(subject, reporters)` sorted by subject.
    Snapshot {
        reports: Vec<(NodeId, Vec<NodeId>)>,
        blacklist: Vec<NodeId>,
    },
    End {
        generated: u64,
        delivered: u64,
        dropped: u64,
        in_flight: u64,
    },
}

impl TraceEvent {
    pub fn kind(&self) -> &'static str {
        match self {
            TraceEvent::Start { .. } => "start",
            TraceEvent::MobilityTick { .. } => "mobility_tick",
            TraceEvent::PuToggle { .. } => "pu_toggle",
            TraceEvent::Recluster { .. } => "recluster",
            TraceEvent::DataGenerated { .. } => "data_generated",
            TraceEvent::DataForward { .. } => "data_forward",
            TraceEvent::Deliver { .. } => "deliver",
            TraceEvent::Drop { .. } => "drop",
            TraceEvent::Control { .. } => "control",
            TraceEvent::RreqSend { .. } => "rreq_send",
            TraceEvent::RrepSend { .. } => "rrep_send",
            TraceEvent::RouteDiscovered { .. } => "route_discovered",
            TraceEvent::RouteSelect { .. } => "route_select",
            TraceEvent::RouteFailure { .. } => "route_failure",
            TraceEvent::Report { .. } => "report",
            TraceEvent::Blacklist { .. } => "blacklist",
            TraceEvent::Warning { .. } => "warning",
            TraceEvent::Snapshot { .. } => "snapshot",
            TraceEvent::End { .. } => "end",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub t: f64,
    #[serde(flatten)]
    pub event: TraceEvent,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trace {
    records: Vec<TraceRecord>,
}

impl Trace {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, t: f64, event: TraceEvent) {
        self.records.push(TraceRecord { t, event });
    }

    pub fn records(&self) -> &[TraceRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn write_jsonl<W: std::io::Write>(&self, mut out: W) -> std::io::Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut out, r)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("json is utf-8")
    }

    pub fn parse_jsonl(text: &str) -> Result<Trace, serde_json::Error> {
        let records = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(serde_json::from_str)
            .collect::<Result<_, _>>()?;
        Ok(Trace { records })
    }

    /// SHA-256 of the serialized trace, lowercase hex.
    pub fn hash_hex(&self) -> String {
        let mut hasher = Sha256::new();
        for r in &self.records {
            hasher.update(serde_json::to_vec(r).expect("record serializes"));
            hasher.update(b"\n");
        }
        hasher.finalize().iter().fold(String::with_capacity(64), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn records_round_trip_exactly() {
        let mut trace = Trace::new();
        trace.push(0.1 + 0.2, TraceEvent::Deliver {
            packet: 7,
            src: NodeId(1),
            dst: NodeId(2),
            gen_t: 1.0 / 3.0,
            hops: 2,
        });
        trace.push(5.0, TraceEvent::Control { node: NodeId(3), msg: ControlKind::Rreq, receivers: 4 });
        let text = trace.to_jsonl();
        assert!(text.starts_with("{\"t\":0.30000000000000004,\"kind\":\"deliver\""), "{text}");
        let back = Trace::parse_jsonl(&text).unwrap();
        assert_eq!(back, trace);
        assert_eq!(back.hash_hex(), trace.hash_hex());
        assert_eq!(trace.hash_hex().len(), 64);
    }
}
