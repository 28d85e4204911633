//! Mobility-derived link quantities: RSSI distance, motion direction angle,
//! angular displacement, speed, and the transmit weight built from them.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::KinematicsError;
use crate::model::{Position, Timestamp};

/// Default floor for each denominator factor of [`transmit_weight`].
pub const TRANSMIT_WEIGHT_FLOOR: f64 = 1e-6;

/// Log-distance path-loss parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadioParams {
    /// Measured path loss, dB.
    pub path_loss_db: f64,
    pub loss_exponent: f64,
    /// Wavelength of the received signal, meters.
    pub wavelength: f64,
    /// Reference distance, meters.
    pub ref_distance: f64,
}

impl RadioParams {
    fn check(&self) -> Result<(), KinematicsError> {
        if !(self.loss_exponent > 0.0) {
            return Err(KinematicsError::InvalidRadioParams("loss_exponent"));
        }
        if !(self.wavelength > 0.0) {
            return Err(KinematicsError::InvalidRadioParams("wavelength"));
        }
        if !(self.ref_distance > 0.0) {
            return Err(KinematicsError::InvalidRadioParams("ref_distance"));
        }
        Ok(())
    }

    /// Free-space loss at the reference distance, `20 log10(4 pi l0 / lambda)`.
    pub fn reference_loss_db(&self) -> f64 {
        20.0 * (4.0 * PI * self.ref_distance / self.wavelength).log10()
    }

    /// Path loss this model predicts at `distance`; inverse of
    /// [`distance_from_rssi`]. Used to synthesize measurements.
    pub fn path_loss_at(&self, distance: f64) -> f64 {
        self.reference_loss_db() + 10.0 * self.loss_exponent * (distance / self.ref_distance).log10()
    }

    pub fn with_path_loss(self, path_loss_db: f64) -> Self {
        RadioParams {
            path_loss_db,
            ..self
        }
    }
}

/// Distance estimate from measured path loss:
/// `d = 10^((kappa - 20 log10(4 pi l0 / lambda)) / (10 omega)) * l0`.
pub fn distance_from_rssi(params: &RadioParams) -> Result<f64, KinematicsError> {
    params.check()?;
    let exponent = (params.path_loss_db - params.reference_loss_db()) / (10.0 * params.loss_exponent);
    let d = 10f64.powf(exponent) * params.ref_distance;
    if d.is_finite() && d > 0.0 {
        Ok(d)
    } else {
        Err(KinematicsError::OutOfModelRssi)
    }
}

/// Positions and timestamps of one forwarding step plus the destination's
/// motion over the same step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MobilitySample {
    /// Node position when it received the packet.
    pub recv_pos: Position,
    /// Node position when it sent the packet.
    pub send_pos: Position,
    pub dest_recv_pos: Position,
    pub dest_send_pos: Position,
    pub t_recv: Timestamp,
    pub t_send: Timestamp,
    /// Transmission time, seconds.
    pub tx_time: f64,
}

impl MobilitySample {
    /// `(t_send + tx_time) - t_recv`.
    pub fn interval(&self) -> f64 {
        (self.t_send.secs() + self.tx_time) - self.t_recv.secs()
    }
}

/// Angle between the node's motion vector and the destination's, in `[0, pi]`.
pub fn direction_angle(sample: &MobilitySample) -> Result<f64, KinematicsError> {
    let (ux, uy) = (
        sample.send_pos.x - sample.recv_pos.x,
        sample.send_pos.y - sample.recv_pos.y,
    );
    let (vx, vy) = (
        sample.dest_send_pos.x - sample.dest_recv_pos.x,
        sample.dest_send_pos.y - sample.dest_recv_pos.y,
    );
    let nu = ux.hypot(uy);
    let nv = vx.hypot(vy);
    if nu == 0.0 || nv == 0.0 {
        return Err(KinematicsError::StationaryEndpoint);
    }
    let cos = ((ux * vx + uy * vy) / (nu * nv)).clamp(-1.0, 1.0);
    Ok(cos.acos())
}

/// [`direction_angle`], with a stationary endpoint counted as no direction
/// change (angle 0).
pub fn direction_angle_or_zero(sample: &MobilitySample) -> f64 {
    direction_angle(sample).unwrap_or(0.0)
}

/// Angular displacement `d * theta`.
pub fn displacement(distance: f64, theta: f64) -> f64 {
    debug_assert!(distance >= 0.0);
    debug_assert!((0.0..=PI).contains(&theta));
    distance * theta
}

/// Straight-line distance between receive and send positions over
/// `(t_send + tx_time) - t_recv`.
pub fn speed(sample: &MobilitySample) -> Result<f64, KinematicsError> {
    let interval = sample.interval();
    if !(interval > 0.0) {
        return Err(KinematicsError::NonPositiveInterval(interval));
    }
    Ok(sample.recv_pos.distance(sample.send_pos) / interval)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransmitWeightInputs {
    /// Transmission range, meters.
    pub tx_range: f64,
    /// Angular displacement, meter-radians.
    pub displacement: f64,
    /// One-hop probe round-trip delay, seconds.
    pub probe_link_delay: f64,
    /// Speed, m/s.
    pub speed: f64,
}

/// `range / (displacement * probe_delay * speed)` with each denominator
/// factor floored at [`TRANSMIT_WEIGHT_FLOOR`].
pub fn transmit_weight(inputs: &TransmitWeightInputs) -> Result<f64, KinematicsError> {
    transmit_weight_with_floor(inputs, TRANSMIT_WEIGHT_FLOOR)
}

pub fn transmit_weight_with_floor(
    inputs: &TransmitWeightInputs,
    floor: f64,
) -> Result<f64, KinematicsError> {
    let TransmitWeightInputs {
        tx_range,
        displacement,
        probe_link_delay,
        speed,
    } = *inputs;
    if ![tx_range, displacement, probe_link_delay, speed]
        .iter()
        .all(|v| v.is_finite())
    {
        return Err(KinematicsError::NonFiniteInput);
    }
    if tx_range <= 0.0 {
        return Err(KinematicsError::InvalidTransmissionRange(tx_range));
    }
    let denom = displacement.max(floor) * probe_link_delay.max(floor) * speed.max(floor);
    Ok(tx_range / denom)
}
