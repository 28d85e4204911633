//! Scenario configuration: one TOML document with a section per subsystem.
//!
//! Every tunable has a default; the defaults reproduce the evaluation set-up
//! (120 s runs, 256-byte CBR packets at 5 packets/s, 500 m range, 5 m/s,
//! five malicious nodes) plus the protocol constants this crate picks where
//! the protocol description leaves them open.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::ConfigError;

/// Protocol variant simulated by a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProtocolVariant {
    /// Full protocol: NHDF metric with intruder detection and blacklisting.
    Proposed,
    /// Same metric with IF pinned to 1 and trust reports disabled.
    NoTrust,
}

impl ProtocolVariant {
    pub fn as_str(self) -> &'static str {
        match self {
            ProtocolVariant::Proposed => "proposed",
            ProtocolVariant::NoTrust => "no_trust",
        }
    }

    pub fn trust_enabled(self) -> bool {
        matches!(self, ProtocolVariant::Proposed)
    }
}

impl std::fmt::Display for ProtocolVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ProtocolVariant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "proposed" => Ok(ProtocolVariant::Proposed),
            "no_trust" | "no-trust" => Ok(ProtocolVariant::NoTrust),
            other => Err(format!("unknown variant '{other}' (expected proposed or no_trust)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClusterMode {
    /// Greedy common-channel clustering over the live neighbor graph.
    Greedy,
    /// Nodes pre-assigned round-robin to `fixed_cluster_count` groups; a group
    /// whose channel intersection would be empty is split greedily.
    Fixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioSection {
    /// Secondary-user node count.
    pub node_count: usize,
    pub area_width_m: f64,
    pub area_height_m: f64,
    pub speed_mps: f64,
    pub run_time_s: f64,
    pub channel_count: usize,
    /// Channels each secondary user's radio supports (random subset).
    pub channels_per_node: usize,
    pub malicious_count: usize,
    pub rng_seed: u64,
    pub variant: ProtocolVariant,
    pub mobility_tick_s: f64,
    pub snapshot_interval_s: f64,
}

impl Default for ScenarioSection {
    fn default() -> Self {
        // 4000 m^2 as a square.
        let side = 4000f64.sqrt();
        ScenarioSection {
            node_count: 50,
            area_width_m: side,
            area_height_m: side,
            speed_mps: 5.0,
            run_time_s: 120.0,
            channel_count: 10,
            channels_per_node: 6,
            malicious_count: 5,
            rng_seed: 1,
            variant: ProtocolVariant::Proposed,
            mobility_tick_s: 1.0,
            snapshot_interval_s: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RadioSection {
    pub tx_range_m: f64,
    pub loss_exponent: f64,
    pub wavelength_m: f64,
    pub ref_distance_m: f64,
    /// Standard deviation of Gaussian noise added to generated path loss.
    pub rssi_noise_db: f64,
}

impl Default for RadioSection {
    fn default() -> Self {
        RadioSection {
            tx_range_m: 500.0,
            loss_exponent: 2.0,
            wavelength_m: 0.125,
            ref_distance_m: 1.0,
            rssi_noise_db: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DelaySection {
    pub collision_prob: f64,
    /// Duration of one contention window, seconds.
    pub window_s: f64,
    /// Tuning delay per channel-grid step, seconds.
    pub switch_step_delay_s: f64,
    pub channel_step_mhz: f64,
    pub data_rate_bps: f64,
}

impl Default for DelaySection {
    fn default() -> Self {
        DelaySection {
            collision_prob: 0.1,
            window_s: 0.001,
            switch_step_delay_s: 0.010,
            channel_step_mhz: 10.0,
            data_rate_bps: 1_000_000.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrafficSection {
    pub packet_size_bytes: u32,
    pub cbr_rate_pps: f64,
    /// Fraction of `node_count` that originates a CBR flow.
    pub source_fraction: f64,
    /// Drop-tail limit on a node's data transmit backlog, in packets.
    pub queue_limit: u32,
    /// Base size of a control message before per-hop and ledger fields.
    pub control_size_bytes: u32,
}

impl Default for TrafficSection {
    fn default() -> Self {
        TrafficSection {
            packet_size_bytes: 256,
            cbr_rate_pps: 5.0,
            source_fraction: 0.2,
            queue_limit: 50,
            control_size_bytes: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrustSection {
    pub drop_probability: f64,
    /// How long an observer waits for the expected forward before reporting.
    pub watchdog_timeout_s: f64,
}

impl Default for TrustSection {
    fn default() -> Self {
        TrustSection {
            drop_probability: 1.0,
            watchdog_timeout_s: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectrumSection {
    pub pu_count: usize,
    pub pu_range_m: f64,
    pub pu_mean_on_s: f64,
    pub pu_mean_off_s: f64,
    pub recluster_period_s: f64,
    pub cluster_mode: ClusterMode,
    pub fixed_cluster_count: usize,
}

impl Default for SpectrumSection {
    fn default() -> Self {
        SpectrumSection {
            pu_count: 5,
            pu_range_m: 25.0,
            pu_mean_on_s: 30.0,
            pu_mean_off_s: 30.0,
            recluster_period_s: 10.0,
            cluster_mode: ClusterMode::Greedy,
            fixed_cluster_count: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RoutingSection {
    /// Path-collection window after an RREQ is originated.
    pub rrep_wait_s: f64,
    pub route_ttl_s: f64,
    /// Extra discovery attempts when a window closes with no usable path.
    pub rreq_retries: u32,
    /// Upper bound of the uniform random delay before an RREQ rebroadcast.
    pub forward_jitter_s: f64,
    /// Floor applied to each denominator factor of the transmit weight.
    pub transmit_weight_floor: f64,
}

impl Default for RoutingSection {
    fn default() -> Self {
        RoutingSection {
            rrep_wait_s: 0.2,
            route_ttl_s: 10.0,
            rreq_retries: 2,
            forward_jitter_s: 0.005,
            transmit_weight_floor: 1e-6,
        }
    }
}

/// Explicitly declared node. Secondary users must use ids `0..node_count`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeSpec {
    pub id: u32,
    pub x: f64,
    pub y: f64,
    #[serde(default)]
    pub heading: Option<f64>,
    #[serde(default)]
    pub channels: Vec<u16>,
    #[serde(default)]
    pub malicious: bool,
    #[serde(default)]
    pub primary_user: bool,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub scenario: ScenarioSection,
    pub radio: RadioSection,
    pub delay: DelaySection,
    pub traffic: TrafficSection,
    pub trust: TrustSection,
    pub spectrum: SpectrumSection,
    pub routing: RoutingSection,
    /// Optional explicit node list; generated from the seed when empty.
    pub nodes: Vec<NodeSpec>,
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.scenario.rng_seed = seed;
        self
    }

    pub fn with_nodes(mut self, node_count: usize) -> Self {
        self.scenario.node_count = node_count;
        self
    }

    pub fn with_variant(mut self, variant: ProtocolVariant) -> Self {
        self.scenario.variant = variant;
        self
    }

    pub fn packet_bits(&self) -> f64 {
        f64::from(self.traffic.packet_size_bytes) * 8.0
    }
}
