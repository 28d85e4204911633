//! Closed-form per-link delay: queuing, contention back-off and channel
//! switching, summed into the link delay used by the routing metric and by
//! the simulator's message latency.

use serde::{Deserialize, Serialize};

use crate::error::DelayError;
use crate::model::ChannelId;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QueueInputs {
    pub data_size_bits: f64,
    pub neighbor_count: u32,
    pub data_rate_bps: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BackoffInputs {
    pub collision_prob: f64,
    /// Nodes sharing the channel, the sender included.
    pub neighbor_count: u32,
    /// One contention window, seconds.
    pub window: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SwitchInputs {
    pub from_channel: ChannelId,
    pub to_channel: ChannelId,
    /// Tuning delay between adjacent grid channels, seconds.
    pub per_step_delay: f64,
}

/// `S * V / RT`.
pub fn queuing_delay(input: &QueueInputs) -> Result<f64, DelayError> {
    if input.data_rate_bps == 0.0 {
        return Err(DelayError::ZeroDataRate);
    }
    if !(input.data_rate_bps > 0.0) || !(input.data_size_bits >= 0.0) {
        return Err(DelayError::Invalid("size and rate must be non-negative"));
    }
    Ok(input.data_size_bits * f64::from(input.neighbor_count) / input.data_rate_bps)
}

/// Expected back-off `z / ((1 - b) * (1 - (1 - b)^(V - 1)))`.
///
/// With a single node on the channel the denominator vanishes; that case is
/// one contention window, `z`.
pub fn backoff_delay(input: &BackoffInputs) -> Result<f64, DelayError> {
    let b = input.collision_prob;
    if b >= 1.0 {
        return Err(DelayError::CertainCollision(b));
    }
    if !(b >= 0.0) {
        return Err(DelayError::Invalid("collision probability must be in [0, 1)"));
    }
    if !(input.window > 0.0) {
        return Err(DelayError::Invalid("window must be positive"));
    }
    match input.neighbor_count {
        0 => Err(DelayError::NoContenders),
        1 => Ok(input.window),
        v => {
            let idle = 1.0 - b;
            let denom = idle * (1.0 - idle.powi(v as i32 - 1));
            if denom > 0.0 {
                Ok(input.window / denom)
            } else {
                // b == 0: nobody ever collides, so no window is ever lost.
                Ok(input.window)
            }
        }
    }
}

/// `a * |p - q|` over channel grid steps.
pub fn switching_delay(input: &SwitchInputs) -> f64 {
    input.per_step_delay * f64::from(input.from_channel.steps_to(input.to_channel))
}

/// Sum of the three components.
pub fn link_delay(switch: f64, queue: f64, backoff: f64) -> f64 {
    switch + queue + backoff
}

/// Delay parameters shared by every link in a scenario.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DelayModel {
    pub collision_prob: f64,
    pub window: f64,
    pub per_step_delay: f64,
    pub data_rate_bps: f64,
}

impl DelayModel {
    /// Link delay for a message of `size_bits` sent by a node with
    /// `neighbor_count` neighbors, `channel_contenders` of which share the
    /// transmit channel, after retuning `from -> to`.
    pub fn link(
        &self,
        size_bits: f64,
        neighbor_count: u32,
        channel_contenders: u32,
        from: ChannelId,
        to: ChannelId,
    ) -> Result<f64, DelayError> {
        let queue = queuing_delay(&QueueInputs {
            data_size_bits: size_bits,
            neighbor_count,
            data_rate_bps: self.data_rate_bps,
        })?;
        let backoff = backoff_delay(&BackoffInputs {
            collision_prob: self.collision_prob,
            neighbor_count: channel_contenders.max(1),
            window: self.window,
        })?;
        let switch = switching_delay(&SwitchInputs {
            from_channel: from,
            to_channel: to,
            per_step_delay: self.per_step_delay,
        });
        Ok(link_delay(switch, queue, backoff))
    }

    pub fn tx_time(&self, size_bits: f64) -> f64 {
        size_bits / self.data_rate_bps
    }
}
