//! The next-hop determination factor (NHDF) link metric, route scoring and
//! selection, and reactive RREQ/RREP route discovery.
//!
//! Per link the metric is `(xi_T / delay)^C_n / IF`: transmit weight over
//! link delay, raised to the number of shared free channels, divided by the
//! intruder determination factor. A path scores the sum of its link metrics;
//! any zero link (an endpoint is blacklisted) vetoes the whole path.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::RoutingError;
use crate::model::{ChannelId, NodeId, Position, Timestamp};
use crate::trust::IfValue;

/// `(xi_t / link_delay)^common_channels / if_value`, 0 for a blacklisted link.
///
/// Values beyond `f64::MAX` saturate at `f64::MAX` so paths stay comparable.
pub fn nhdf(
    xi_t: f64,
    link_delay: f64,
    common_channels: u32,
    if_value: IfValue,
) -> Result<f64, RoutingError> {
    if link_delay == 0.0 {
        return Err(RoutingError::ZeroLinkDelay);
    }
    if common_channels == 0 {
        return Err(RoutingError::NoCommonChannel);
    }
    let IfValue::Finite(divisor) = if_value else {
        return Ok(0.0);
    };
    let base = xi_t / link_delay;
    if base < 0.0 {
        return Err(RoutingError::NegativeMetric(base));
    }
    let value = base.powi(common_channels.min(i32::MAX as u32) as i32) / divisor;
    Ok(if value.is_infinite() { f64::MAX } else { value })
}

/// Link IF: the less trusted of the two endpoints.
pub fn link_if(from: IfValue, to: IfValue) -> IfValue {
    from.worst(to)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkMetrics {
    pub xi_t: f64,
    pub link_delay: f64,
    pub common_channels: u32,
    pub if_value: IfValue,
    pub nhdf: f64,
}

impl LinkMetrics {
    pub fn new(
        xi_t: f64,
        link_delay: f64,
        common_channels: u32,
        if_value: IfValue,
    ) -> Result<Self, RoutingError> {
        Ok(LinkMetrics {
            xi_t,
            link_delay,
            common_channels,
            if_value,
            nhdf: nhdf(xi_t, link_delay, common_channels, if_value)?,
        })
    }

    /// Same link with a new IF.
    pub fn with_if(self, if_value: IfValue) -> Self {
        LinkMetrics {
            if_value,
            nhdf: nhdf(self.xi_t, self.link_delay, self.common_channels, if_value)
                .expect("link was valid when built"),
            ..self
        }
    }
}

/// Cumulative path score: the sum of per-link NHDF values, or 0 when any
/// link is 0.
pub fn path_score(links: &[f64]) -> Result<f64, RoutingError> {
    if links.is_empty() {
        return Err(RoutingError::EmptyPath);
    }
    if let Some(&neg) = links.iter().find(|v| !(**v >= 0.0)) {
        return Err(RoutingError::NegativeMetric(neg));
    }
    if links.contains(&0.0) {
        return Ok(0.0);
    }
    let sum: f64 = links.iter().sum();
    Ok(if sum.is_infinite() { f64::MAX } else { sum })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouteEntry {
    pub destination: NodeId,
    /// Full node sequence, owner first, destination last.
    pub path: Vec<NodeId>,
    /// Metrics of `path[k] -> path[k + 1]`.
    pub links: Vec<LinkMetrics>,
    pub path_score: f64,
    /// Least trusted (largest) IF along the path.
    pub worst_if: IfValue,
    pub discovered_at: Timestamp,
}

impl RouteEntry {
    pub fn new(
        path: Vec<NodeId>,
        links: Vec<LinkMetrics>,
        discovered_at: Timestamp,
    ) -> Result<Self, RoutingError> {
        if path.len() < 2 || links.len() + 1 != path.len() {
            return Err(RoutingError::EmptyPath);
        }
        let scores: Vec<f64> = links.iter().map(|l| l.nhdf).collect();
        let score = path_score(&scores)?;
        let worst_if = links
            .iter()
            .map(|l| l.if_value)
            .fold(IfValue::ONE, IfValue::worst);
        Ok(RouteEntry {
            destination: *path.last().expect("non-empty"),
            path,
            links,
            path_score: score,
            worst_if,
            discovered_at,
        })
    }

    pub fn hops(&self) -> usize {
        self.links.len()
    }

    pub fn contains(&self, node: NodeId) -> bool {
        self.path.contains(&node)
    }

    pub fn next_hop(&self) -> NodeId {
        self.path[1]
    }

    /// Re-scores the entry under current node IF values.
    pub fn rescored(&self, if_of: impl Fn(NodeId) -> IfValue) -> RouteEntry {
        let links: Vec<LinkMetrics> = self
            .links
            .iter()
            .zip(self.path.windows(2))
            .map(|(l, w)| l.with_if(link_if(if_of(w[0]), if_of(w[1]))))
            .collect();
        RouteEntry::new(self.path.clone(), links, self.discovered_at)
            .expect("rescoring keeps the path shape")
    }

    /// Selection order: higher score, then fewer hops, then the
    /// lexicographically smaller node sequence.
    pub fn preference(&self, other: &RouteEntry) -> std::cmp::Ordering {
        self.path_score
            .total_cmp(&other.path_score)
            .then(other.hops().cmp(&self.hops()))
            .then(other.path.cmp(&self.path))
    }
}

/// Picks the best positive-score entry; see [`RouteEntry::preference`].
pub fn select_route(entries: &[RouteEntry]) -> Result<&RouteEntry, RoutingError> {
    entries
        .iter()
        .filter(|e| e.path_score > 0.0)
        .max_by(|a, b| a.preference(b))
        .ok_or(RoutingError::RouteFailure)
}

/// Per-destination candidate routes.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RoutingTable {
    entries: BTreeMap<NodeId, Vec<RouteEntry>>,
}

impl RoutingTable {
    /// Adds `entry`, replacing any entry with the same path.
    pub fn insert(&mut self, entry: RouteEntry) {
        let list = self.entries.entry(entry.destination).or_default();
        match list.iter_mut().find(|e| e.path == entry.path) {
            Some(slot) => *slot = entry,
            None => list.push(entry),
        }
    }

    pub fn entries_for(&self, destination: NodeId) -> &[RouteEntry] {
        self.entries.get(&destination).map_or(&[], Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.entries.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn remove_expired(&mut self, now: Timestamp, ttl: f64) {
        for list in self.entries.values_mut() {
            list.retain(|e| now.secs() - e.discovered_at.secs() < ttl);
        }
        self.entries.retain(|_, l| !l.is_empty());
    }

    /// Drops every entry whose path contains `node`; returns how many.
    pub fn remove_through(&mut self, node: NodeId) -> usize {
        let mut removed = 0;
        for list in self.entries.values_mut() {
            let before = list.len();
            list.retain(|e| !e.contains(node));
            removed += before - list.len();
        }
        self.entries.retain(|_, l| !l.is_empty());
        removed
    }

    pub fn clear_destination(&mut self, destination: NodeId) {
        self.entries.remove(&destination);
    }
}

/// Forwarding node's position and timing carried in an RREQ so the receiver
/// can evaluate the mobility terms of the link metric.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SenderSample {
    pub node: NodeId,
    pub recv_pos: Position,
    pub send_pos: Position,
    pub t_recv: Timestamp,
    pub t_send: Timestamp,
    pub tx_time: f64,
    /// Sender's data channel at send time.
    pub channel: ChannelId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rreq {
    pub origin: NodeId,
    pub seq: u64,
    pub destination: NodeId,
    /// Nodes traversed so far, origin first, last sender last.
    pub path: Vec<NodeId>,
    pub links: Vec<LinkMetrics>,
    pub sample: SenderSample,
}

impl Rreq {
    pub fn sender(&self) -> NodeId {
        *self.path.last().expect("rreq path starts at origin")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rrep {
    pub source: NodeId,
    pub seq: u64,
    pub destination: NodeId,
    /// Complete discovered path, source first.
    pub path: Vec<NodeId>,
    pub links: Vec<LinkMetrics>,
    pub replier: NodeId,
    /// Cluster head of the destination, on whose behalf the reply is issued.
    pub cluster_head: Option<NodeId>,
    /// Index in `path` of the node the reply is addressed to.
    pub cursor: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControlKind {
    Rreq,
    Rrep,
    Report,
    Warning,
    Acl,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ControlMessage {
    Rreq(Rreq),
    Rrep(Rrep),
    Report { subject: NodeId, reporter: NodeId },
    Warning { subject: NodeId, origin: NodeId },
    Acl { node: NodeId, channels: Vec<ChannelId>, neighbors: Vec<NodeId> },
}

impl ControlMessage {
    pub fn kind(&self) -> ControlKind {
        match self {
            ControlMessage::Rreq(_) => ControlKind::Rreq,
            ControlMessage::Rrep(_) => ControlKind::Rrep,
            ControlMessage::Report { .. } => ControlKind::Report,
            ControlMessage::Warning { .. } => ControlKind::Warning,
            ControlMessage::Acl { .. } => ControlKind::Acl,
        }
    }

    /// Per-hop fields carried, for message sizing.
    pub fn hop_fields(&self) -> usize {
        match self {
            ControlMessage::Rreq(r) => r.path.len(),
            ControlMessage::Rrep(r) => r.path.len(),
            ControlMessage::Acl { channels, neighbors, .. } => channels.len() + neighbors.len(),
            _ => 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    Duplicate,
    Loop,
    BlacklistedSender,
    NoCommonChannel,
    NotOnPath,
    BlacklistedMember,
    ZeroScore,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RreqAction {
    Drop(DropReason),
    /// Forward the extended request. The engine refreshes `sample` at send time.
    Rebroadcast(Rreq),
    /// Send the reply to `rrep.path[rrep.cursor]`.
    Reply(Rrep),
}

#[derive(Debug, Clone, PartialEq)]
pub enum RrepAction {
    Discard(DropReason),
    Forward {
        rrep: Rrep,
        /// Downstream sub-path this node can cache.
        cache: RouteEntry,
    },
    /// The reply reached the source.
    Complete(RouteEntry),
}

/// What route discovery needs from the node handling a message.
pub trait RouteContext {
    fn now(&self) -> Timestamp;
    /// Whether this node's ledger replica has blacklisted `node`.
    fn is_blacklisted(&self, node: NodeId) -> bool;
    /// Whether `node` is in this node's neighbor view.
    fn knows_neighbor(&self, node: NodeId) -> bool;
    /// Metrics of `from -> to` given the forwarding sample of `from`; `None`
    /// when the link is unusable (out of range or no common channel).
    fn estimate_link(&self, from: NodeId, to: NodeId, sample: &SenderSample) -> Option<LinkMetrics>;
    /// This node's own forwarding sample at the current time.
    fn local_sample(&self) -> SenderSample;
    fn cluster_head_of(&self, node: NodeId) -> Option<NodeId>;
}

/// Per-node route discovery state.
#[derive(Debug, Clone)]
pub struct Router {
    id: NodeId,
    seen: HashSet<(NodeId, u64)>,
    next_seq: u64,
}

impl Router {
    pub fn new(id: NodeId) -> Self {
        Router {
            id,
            seen: HashSet::new(),
            next_seq: 0,
        }
    }

    pub fn id(&self) -> NodeId {
        self.id
    }

    /// Next sequence number for a message originated here.
    pub fn next_seq(&mut self) -> u64 {
        self.next_seq += 1;
        self.next_seq
    }

    pub fn originate_rreq(&mut self, destination: NodeId, sample: SenderSample) -> Rreq {
        let seq = self.next_seq();
        self.seen.insert((self.id, seq));
        Rreq {
            origin: self.id,
            seq,
            destination,
            path: vec![self.id],
            links: Vec::new(),
            sample,
        }
    }

    pub fn handle_rreq(&mut self, rreq: &Rreq, ctx: &impl RouteContext) -> RreqAction {
        let sender = rreq.sender();
        if ctx.is_blacklisted(sender) {
            return RreqAction::Drop(DropReason::BlacklistedSender);
        }
        if rreq.path.contains(&self.id) {
            return RreqAction::Drop(DropReason::Loop);
        }
        let is_destination = rreq.destination == self.id;
        // The destination answers every distinct copy; relays forward once.
        if !is_destination && !self.seen.insert((rreq.origin, rreq.seq)) {
            return RreqAction::Drop(DropReason::Duplicate);
        }
        let Some(link) = ctx.estimate_link(sender, self.id, &rreq.sample) else {
            return RreqAction::Drop(DropReason::NoCommonChannel);
        };
        let mut path = rreq.path.clone();
        path.push(self.id);
        let mut links = rreq.links.clone();
        links.push(link);

        if is_destination {
            return RreqAction::Reply(self.reply(rreq, path, links, ctx));
        }
        let dest = rreq.destination;
        if ctx.knows_neighbor(dest) && !ctx.is_blacklisted(dest) {
            if let Some(last) = ctx.estimate_link(self.id, dest, &ctx.local_sample()) {
                let mut full = path.clone();
                full.push(dest);
                let mut full_links = links.clone();
                full_links.push(last);
                return RreqAction::Reply(self.reply(rreq, full, full_links, ctx));
            }
        }
        RreqAction::Rebroadcast(Rreq {
            path,
            links,
            sample: ctx.local_sample(),
            ..rreq.clone()
        })
    }

    fn reply(
        &self,
        rreq: &Rreq,
        path: Vec<NodeId>,
        links: Vec<LinkMetrics>,
        ctx: &impl RouteContext,
    ) -> Rrep {
        let me = path
            .iter()
            .position(|n| *n == self.id)
            .expect("replier is on the path");
        Rrep {
            source: rreq.origin,
            seq: rreq.seq,
            destination: rreq.destination,
            path,
            links,
            replier: self.id,
            cluster_head: ctx.cluster_head_of(rreq.destination),
            cursor: me - 1,
        }
    }

    pub fn handle_rrep(&self, rrep: &Rrep, ctx: &impl RouteContext) -> RrepAction {
        if rrep.path.get(rrep.cursor) != Some(&self.id) {
            return RrepAction::Discard(DropReason::NotOnPath);
        }
        if rrep.path.iter().any(|n| ctx.is_blacklisted(*n)) {
            return RrepAction::Discard(DropReason::BlacklistedMember);
        }
        let sub_path = rrep.path[rrep.cursor..].to_vec();
        let sub_links = rrep.links[rrep.cursor..].to_vec();
        let entry = match RouteEntry::new(sub_path, sub_links, ctx.now()) {
            Ok(e) if e.path_score > 0.0 => e,
            _ => return RrepAction::Discard(DropReason::ZeroScore),
        };
        if rrep.cursor == 0 {
            RrepAction::Complete(entry)
        } else {
            RrepAction::Forward {
                rrep: Rrep {
                    cursor: rrep.cursor - 1,
                    ..rrep.clone()
                },
                cache: entry,
            }
        }
    }
}
