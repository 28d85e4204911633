use std::path::PathBuf;

use thiserror::Error;

use crate::model::{NodeId, Violation};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid config: {0}")]
    Parse(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum KinematicsError {
    #[error("RSSI outside the path-loss model: distance is not finite")]
    OutOfModelRssi,
    #[error("invalid radio parameter {0}")]
    InvalidRadioParams(&'static str),
    #[error("stationary endpoint: zero-length motion vector")]
    StationaryEndpoint,
    #[error("non-positive sampling interval ({0} s)")]
    NonPositiveInterval(f64),
    #[error("invalid transmission range {0} m")]
    InvalidTransmissionRange(f64),
    #[error("non-finite transmit weight input")]
    NonFiniteInput,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DelayError {
    #[error("zero data rate")]
    ZeroDataRate,
    #[error("certain collision (collision probability {0})")]
    CertainCollision(f64),
    #[error("back-off needs at least one node on the channel")]
    NoContenders,
    #[error("invalid delay input: {0}")]
    Invalid(&'static str),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TrustError {
    #[error("node {0} cannot report itself")]
    SelfReport(NodeId),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RoutingError {
    #[error("zero link delay")]
    ZeroLinkDelay,
    #[error("link has no common channel")]
    NoCommonChannel,
    #[error("empty path")]
    EmptyPath,
    #[error("negative link metric {0}")]
    NegativeMetric(f64),
    #[error("no route with a positive score")]
    RouteFailure,
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("scenario rejected: {}", join_violations(.0))]
    InvalidConfig(Vec<Violation>),
}

fn join_violations(v: &[Violation]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}
