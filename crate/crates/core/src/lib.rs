//! Simulation and analysis of trust-aware routing for mobile cognitive radio
//! sensor networks.
//!
//! The crate is organised bottom-up: [`kinematics`] and [`delay`] hold the
//! per-link formulas, [`trust`] the replicated report ledger, [`spectrum`]
//! sensing and clustering, [`routing`] the link metric and route discovery,
//! [`sim`] the event-driven engine, and [`metrics`]/[`sweep`] the run
//! aggregates.

pub mod config;
pub mod delay;
pub mod error;
pub mod kinematics;
pub mod metrics;
pub mod model;
pub mod routing;
pub mod sim;
pub mod spectrum;
pub mod sweep;
pub mod trace;
pub mod trust;
pub mod verify;

pub use config::{ClusterMode, ProtocolVariant, ScenarioConfig};
pub use error::{ConfigError, DelayError, KinematicsError, RoutingError, SimError, TrustError};
pub use metrics::{RunMetrics, SummaryRow};
pub use model::{ChannelId, ChannelSet, NodeId, NodeState, Position, Timestamp};
pub use routing::{select_route, LinkMetrics, RouteEntry};
pub use sim::{run, RunOutput};
pub use trace::{Trace, TraceEvent};
pub use trust::{merge_ledgers, IfValue, TrustLedger};
