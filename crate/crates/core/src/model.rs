//! Shared domain types: node and channel identifiers, positions, timestamps,
//! per-node state, and scenario validation.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::config::ScenarioConfig;
use crate::routing::RoutingTable;

/// Identifier of one node, unique within a scenario.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

impl NodeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}", self.0)
    }
}

/// Largest channel count a [`ChannelSet`] can represent.
pub const MAX_CHANNELS: usize = 64;

/// One licensed channel on a uniform frequency grid.
///
/// Channel `k` sits `k` grid steps above channel 0, so the tuning distance
/// between two channels is the difference of their indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ChannelId(pub u16);

impl ChannelId {
    pub fn index(self) -> usize {
        self.0 as usize
    }

    /// Position on the channel grid, in grid steps.
    pub fn center_offset(self) -> u32 {
        u32::from(self.0)
    }

    /// Number of grid steps between `self` and `other`.
    pub fn steps_to(self, other: ChannelId) -> u32 {
        self.center_offset().abs_diff(other.center_offset())
    }
}

impl fmt::Display for ChannelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ch{}", self.0)
    }
}

/// Set of channels, stored as a bitmask over [`MAX_CHANNELS`] grid slots.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ChannelSet(u64);

impl ChannelSet {
    pub const EMPTY: ChannelSet = ChannelSet(0);

    /// All channels `0..count`.
    pub fn full(count: usize) -> Self {
        assert!(count <= MAX_CHANNELS, "at most {MAX_CHANNELS} channels");
        if count == MAX_CHANNELS {
            ChannelSet(u64::MAX)
        } else {
            ChannelSet((1u64 << count) - 1)
        }
    }

    pub fn from_bits(bits: u64) -> Self {
        ChannelSet(bits)
    }

    pub fn bits(self) -> u64 {
        self.0
    }

    pub fn insert(&mut self, ch: ChannelId) {
        assert!(ch.index() < MAX_CHANNELS, "channel {ch} outside grid");
        self.0 |= 1 << ch.index();
    }

    pub fn remove(&mut self, ch: ChannelId) {
        if ch.index() < MAX_CHANNELS {
            self.0 &= !(1 << ch.index());
        }
    }

    pub fn contains(self, ch: ChannelId) -> bool {
        ch.index() < MAX_CHANNELS && self.0 & (1 << ch.index()) != 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn intersection(self, other: ChannelSet) -> ChannelSet {
        ChannelSet(self.0 & other.0)
    }

    pub fn union(self, other: ChannelSet) -> ChannelSet {
        ChannelSet(self.0 | other.0)
    }

    pub fn difference(self, other: ChannelSet) -> ChannelSet {
        ChannelSet(self.0 & !other.0)
    }

    pub fn first(self) -> Option<ChannelId> {
        (self.0 != 0).then(|| ChannelId(self.0.trailing_zeros() as u16))
    }

    /// Highest channel index in the set, if any.
    pub fn last(self) -> Option<ChannelId> {
        (self.0 != 0).then(|| ChannelId(63 - self.0.leading_zeros() as u16))
    }

    /// Channels in ascending index order.
    pub fn iter(self) -> impl Iterator<Item = ChannelId> {
        let mut bits = self.0;
        std::iter::from_fn(move || {
            if bits == 0 {
                return None;
            }
            let idx = bits.trailing_zeros();
            bits &= bits - 1;
            Some(ChannelId(idx as u16))
        })
    }

    /// Member closest to `target` on the grid; ties go to the lower index.
    pub fn nearest_to(self, target: ChannelId) -> Option<ChannelId> {
        self.iter().min_by_key(|c| (c.steps_to(target), c.0))
    }
}

impl FromIterator<ChannelId> for ChannelSet {
    fn from_iter<I: IntoIterator<Item = ChannelId>>(iter: I) -> Self {
        let mut set = ChannelSet::EMPTY;
        for ch in iter {
            set.insert(ch);
        }
        set
    }
}

/// Planar position in meters.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Position {
    pub x: f64,
    pub y: f64,
}

impl Position {
    pub const fn new(x: f64, y: f64) -> Self {
        Position { x, y }
    }

    pub fn distance(self, other: Position) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn translated(self, dx: f64, dy: f64) -> Self {
        Position::new(self.x + dx, self.y + dy)
    }
}

/// Simulation-clock time in seconds.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Timestamp(pub f64);

impl Timestamp {
    pub const ZERO: Timestamp = Timestamp(0.0);

    pub fn secs(self) -> f64 {
        self.0
    }

    pub fn after(self, dt: f64) -> Timestamp {
        Timestamp(self.0 + dt)
    }

    /// Total order (via `f64::total_cmp`) for use as a queue key.
    pub fn total_cmp(&self, other: &Timestamp) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.6}s", self.0)
    }
}

/// Cluster identifier; equal to the cluster head's node id at formation time.
pub type ClusterId = u32;

/// State of one sensor node.
#[derive(Debug, Clone)]
pub struct NodeState {
    pub id: NodeId,
    pub pos: Position,
    /// Constant cruising speed in m/s.
    pub speed_setpoint: f64,
    /// Heading in radians, measured counter-clockwise from +x.
    pub heading: f64,
    /// Channels the radio supports.
    pub channels: ChannelSet,
    pub cluster: Option<ClusterId>,
    pub is_primary_user: bool,
    /// Ground truth. Only the behavior injector may read this.
    pub is_malicious: bool,
    pub routing_table: RoutingTable,
}

impl NodeState {
    pub fn new(id: NodeId, pos: Position, channels: ChannelSet) -> Self {
        NodeState {
            id,
            pos,
            speed_setpoint: 0.0,
            heading: 0.0,
            channels,
            cluster: None,
            is_primary_user: false,
            is_malicious: false,
            routing_table: RoutingTable::default(),
        }
    }

    pub fn velocity(&self) -> (f64, f64) {
        (
            self.speed_setpoint * self.heading.cos(),
            self.speed_setpoint * self.heading.sin(),
        )
    }
}

/// One broken scenario invariant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    /// Dotted path of the offending config field.
    pub field: String,
    pub message: String,
}

impl Violation {
    pub fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        Violation {
            field: field.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

/// Checks every scenario invariant and returns the violations found.
///
/// An empty list means the scenario can be run. The function has no side
/// effects and returns the same list for the same input.
pub fn validate_scenario(config: &ScenarioConfig) -> Vec<Violation> {
    let mut out = Vec::new();
    let s = &config.scenario;

    let mut positive = |field: &str, value: f64| {
        if !(value.is_finite() && value > 0.0) {
            out.push(Violation::new(field, format!("must be positive, got {value}")));
        }
    };
    positive("scenario.area_width_m", s.area_width_m);
    positive("scenario.area_height_m", s.area_height_m);
    positive("scenario.speed_mps", s.speed_mps);
    positive("scenario.mobility_tick_s", s.mobility_tick_s);
    positive("scenario.snapshot_interval_s", s.snapshot_interval_s);
    positive("radio.tx_range_m", config.radio.tx_range_m);
    positive("radio.loss_exponent", config.radio.loss_exponent);
    positive("radio.wavelength_m", config.radio.wavelength_m);
    positive("radio.ref_distance_m", config.radio.ref_distance_m);
    positive("delay.window_s", config.delay.window_s);
    positive("delay.switch_step_delay_s", config.delay.switch_step_delay_s);
    positive("delay.channel_step_mhz", config.delay.channel_step_mhz);
    positive("delay.data_rate_bps", config.delay.data_rate_bps);
    positive("traffic.cbr_rate_pps", config.traffic.cbr_rate_pps);
    positive("traffic.source_fraction", config.traffic.source_fraction);
    positive("trust.watchdog_timeout_s", config.trust.watchdog_timeout_s);
    positive("spectrum.pu_range_m", config.spectrum.pu_range_m);
    positive("spectrum.pu_mean_on_s", config.spectrum.pu_mean_on_s);
    positive("spectrum.pu_mean_off_s", config.spectrum.pu_mean_off_s);
    positive("spectrum.recluster_period_s", config.spectrum.recluster_period_s);
    positive("routing.rrep_wait_s", config.routing.rrep_wait_s);
    positive("routing.route_ttl_s", config.routing.route_ttl_s);
    positive("routing.transmit_weight_floor", config.routing.transmit_weight_floor);

    if !(s.run_time_s.is_finite() && s.run_time_s >= 0.0) {
        out.push(Violation::new(
            "scenario.run_time_s",
            format!("must be non-negative, got {}", s.run_time_s),
        ));
    }
    if s.node_count == 0 {
        out.push(Violation::new("scenario.node_count", "must be positive"));
    }
    if s.channel_count == 0 || s.channel_count > MAX_CHANNELS {
        out.push(Violation::new(
            "scenario.channel_count",
            format!("must be in 1..={MAX_CHANNELS}, got {}", s.channel_count),
        ));
    }
    if s.channels_per_node == 0 || s.channels_per_node > s.channel_count {
        out.push(Violation::new(
            "scenario.channels_per_node",
            format!(
                "must be in 1..=channel_count ({}), got {}",
                s.channel_count, s.channels_per_node
            ),
        ));
    }
    if s.malicious_count >= s.node_count && s.node_count > 0 {
        out.push(Violation::new(
            "scenario.malicious_count",
            format!(
                "must be below node_count ({}), got {}",
                s.node_count, s.malicious_count
            ),
        ));
    }
    if !(0.0..1.0).contains(&config.delay.collision_prob) {
        out.push(Violation::new(
            "delay.collision_prob",
            format!("must be in [0, 1), got {}", config.delay.collision_prob),
        ));
    }
    if !(0.0..=1.0).contains(&config.trust.drop_probability) {
        out.push(Violation::new(
            "trust.drop_probability",
            format!("must be in [0, 1], got {}", config.trust.drop_probability),
        ));
    }
    if config.traffic.packet_size_bytes == 0 {
        out.push(Violation::new("traffic.packet_size_bytes", "must be positive"));
    }
    if config.traffic.control_size_bytes == 0 {
        out.push(Violation::new("traffic.control_size_bytes", "must be positive"));
    }
    if config.traffic.queue_limit == 0 {
        out.push(Violation::new("traffic.queue_limit", "must be positive"));
    }
    if config.spectrum.fixed_cluster_count == 0 {
        out.push(Violation::new("spectrum.fixed_cluster_count", "must be positive"));
    }
    if !(config.routing.forward_jitter_s.is_finite() && config.routing.forward_jitter_s >= 0.0) {
        out.push(Violation::new("routing.forward_jitter_s", "must be non-negative"));
    }
    if !(config.radio.rssi_noise_db.is_finite() && config.radio.rssi_noise_db >= 0.0) {
        out.push(Violation::new("radio.rssi_noise_db", "must be non-negative"));
    }

    validate_declared_nodes(config, &mut out);
    out
}

fn validate_declared_nodes(config: &ScenarioConfig, out: &mut Vec<Violation>) {
    let nodes = &config.nodes;
    if nodes.is_empty() {
        return;
    }
    let s = &config.scenario;
    let mut seen: BTreeMap<u32, usize> = BTreeMap::new();
    for node in nodes {
        *seen.entry(node.id).or_default() += 1;
    }
    for (id, count) in &seen {
        if *count > 1 {
            out.push(Violation::new(
                "nodes.id",
                format!("node id {id} declared {count} times"),
            ));
        }
    }

    let su_count = nodes.iter().filter(|n| !n.primary_user).count();
    if su_count != s.node_count {
        out.push(Violation::new(
            "scenario.node_count",
            format!("declares {} but {su_count} secondary-user nodes are listed", s.node_count),
        ));
    }
    // Secondary users are indexed 0..node_count by the simulator.
    let su_ids: BTreeSet<u32> = nodes.iter().filter(|n| !n.primary_user).map(|n| n.id).collect();
    if su_ids.iter().any(|&id| id as usize >= su_count) {
        out.push(Violation::new(
            "nodes.id",
            format!("secondary-user ids must be exactly 0..{su_count}"),
        ));
    }
    let malicious = nodes.iter().filter(|n| n.malicious).count();
    if malicious > 0 && malicious != s.malicious_count {
        out.push(Violation::new(
            "scenario.malicious_count",
            format!(
                "declares {} but {malicious} nodes are flagged malicious",
                s.malicious_count
            ),
        ));
    }

    for node in nodes {
        let field = format!("nodes[{}]", node.id);
        let pos = Position::new(node.x, node.y);
        if !pos.is_finite()
            || node.x < 0.0
            || node.y < 0.0
            || node.x > s.area_width_m
            || node.y > s.area_height_m
        {
            out.push(Violation::new(
                format!("{field}.position"),
                format!("({}, {}) outside the simulation area", node.x, node.y),
            ));
        }
        if !node.primary_user && node.channels.is_empty() {
            out.push(Violation::new(
                format!("{field}.channels"),
                "secondary user needs at least one channel",
            ));
        }
        if node.primary_user && node.channels.len() != 1 {
            out.push(Violation::new(
                format!("{field}.channels"),
                "primary user must occupy exactly one channel",
            ));
        }
        if node.primary_user && node.malicious {
            out.push(Violation::new(
                format!("{field}.malicious"),
                "primary users cannot be malicious",
            ));
        }
        for ch in &node.channels {
            if *ch as usize >= s.channel_count {
                out.push(Violation::new(
                    format!("{field}.channels"),
                    format!("channel {ch} >= channel_count {}", s.channel_count),
                ));
            }
        }
        if let Some(h) = node.heading {
            if !h.is_finite() {
                out.push(Violation::new(format!("{field}.heading"), "must be finite"));
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{NodeSpec, ScenarioConfig};

    fn su(id: u32, channels: Vec<u16>) -> NodeSpec {
        NodeSpec {
            id,
            x: 1.0,
            y: 1.0,
            heading: None,
            channels,
            malicious: false,
            primary_user: false,
        }
    }

    #[test]
    fn duplicate_node_id_is_one_violation() {
        let mut cfg = ScenarioConfig::default();
        cfg.scenario.node_count = 3;
        cfg.scenario.malicious_count = 0;
        cfg.nodes = vec![su(0, vec![0]), su(1, vec![1]), su(1, vec![2])];
        let v = validate_scenario(&cfg);
        let dup: Vec<_> = v.iter().filter(|v| v.message.contains("declared 2 times")).collect();
        assert_eq!(dup.len(), 1, "{v:?}");
        assert!(dup[0].message.contains("node id 1"));
    }

    #[test]
    fn table_ii_four_hundred_node_variant_is_valid() {
        let mut cfg = ScenarioConfig::default();
        cfg.scenario.node_count = 400;
        cfg.spectrum.cluster_mode = crate::config::ClusterMode::Fixed;
        cfg.spectrum.fixed_cluster_count = 10;
        assert!(validate_scenario(&cfg).is_empty());
    }

    #[test]
    fn secondary_user_without_channels() {
        let mut cfg = ScenarioConfig::default();
        cfg.scenario.node_count = 2;
        cfg.scenario.malicious_count = 0;
        cfg.nodes = vec![su(0, vec![0, 1]), su(1, vec![])];
        let v = validate_scenario(&cfg);
        assert_eq!(v.len(), 1, "{v:?}");
        assert_eq!(v[0].field, "nodes[1].channels");
    }

    #[test]
    fn validation_is_idempotent() {
        let mut cfg = ScenarioConfig::default();
        cfg.scenario.malicious_count = 500;
        cfg.delay.collision_prob = 1.0;
        assert_eq!(validate_scenario(&cfg), validate_scenario(&cfg));
        assert_eq!(validate_scenario(&cfg).len(), 2);
    }

    #[test]
    fn channel_set_basics() {
        let a: ChannelSet = [1, 2, 5].into_iter().map(ChannelId).collect();
        let b: ChannelSet = [2, 3].into_iter().map(ChannelId).collect();
        assert_eq!(a.intersection(b).iter().collect::<Vec<_>>(), vec![ChannelId(2)]);
        assert_eq!(a.len(), 3);
        assert_eq!(a.first(), Some(ChannelId(1)));
        assert_eq!(a.last(), Some(ChannelId(5)));
        assert_eq!(a.nearest_to(ChannelId(4)), Some(ChannelId(5)));
        assert_eq!(a.nearest_to(ChannelId(3)), Some(ChannelId(2)));
        assert_eq!(ChannelSet::full(64).len(), 64);
        assert!(ChannelSet::EMPTY.nearest_to(ChannelId(0)).is_none());
    }
}
