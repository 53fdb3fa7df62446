//! Expert compute load, activation payload size and per-expert delay.

use alloc::vec::Vec;

use thiserror::Error;

use crate::channel::{ChannelRealization, LinkBudget};

/// Delay value used for a device whose link rate is zero.
pub const UNREACHABLE: f64 = f64::INFINITY;

pub fn is_unreachable(delay_s: f64) -> bool {
    delay_s == UNREACHABLE
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ComputeError {
    #[error("{name} is invalid: {value}")]
    InvalidParameter { name: &'static str, value: f64 },
    #[error("{profiles} device profiles but {realizations} channel realizations")]
    LengthMismatch { profiles: usize, realizations: usize },
    #[error("profile for device {profile} paired with realization for device {realization}")]
    DeviceMismatch { profile: usize, realization: usize },
    #[error("latency vector needs at least one device")]
    Empty,
}

/// Dimensions and coefficients that drive the compute and payload terms.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct ExpertCost {
    pub embedding_dim: usize,
    pub hidden_dim: usize,
    /// FLOPs spent by the activation per hidden unit.
    pub activation_flops: f64,
    /// Bits per transmitted embedding element.
    pub quantization_bits: f64,
}

impl Default for ExpertCost {
    fn default() -> Self {
        Self {
            embedding_dim: 4096,
            hidden_dim: 14336,
            activation_flops: 1.0,
            quantization_bits: 16.0,
        }
    }
}

impl ExpertCost {
    pub fn validate(&self) -> Result<(), ComputeError> {
        if self.embedding_dim == 0 {
            return Err(ComputeError::InvalidParameter { name: "embedding_dim", value: 0.0 });
        }
        if self.hidden_dim == 0 {
            return Err(ComputeError::InvalidParameter { name: "hidden_dim", value: 0.0 });
        }
        if !(self.activation_flops.is_finite() && self.activation_flops >= 0.0) {
            return Err(ComputeError::InvalidParameter {
                name: "activation_flops",
                value: self.activation_flops,
            });
        }
        if !(self.quantization_bits.is_finite() && self.quantization_bits > 0.0) {
            return Err(ComputeError::InvalidParameter {
                name: "quantization_bits",
                value: self.quantization_bits,
            });
        }
        Ok(())
    }
}

/// Expert FLOPs `4 m m_h + 2 m_h m + eta m_h + m_h`, kept in its four-term form.
pub fn expert_flops(cost: &ExpertCost) -> f64 {
    let m = cost.embedding_dim as f64;
    let mh = cost.hidden_dim as f64;
    4.0 * m * mh + 2.0 * mh * m + cost.activation_flops * mh + mh
}

/// Payload of one embedding in bits: `epsilon * m`.
pub fn payload_bits(cost: &ExpertCost) -> f64 {
    cost.quantization_bits * cost.embedding_dim as f64
}

/// A device hosting one expert.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DeviceProfile {
    pub device_id: usize,
    /// Sustained GPU throughput in FLOP/s.
    pub compute_flops: f64,
    pub link: LinkBudget,
}

impl DeviceProfile {
    pub fn validate(&self) -> Result<(), ComputeError> {
        if !(self.compute_flops.is_finite() && self.compute_flops > 0.0) {
            return Err(ComputeError::InvalidParameter {
                name: "compute_flops",
                value: self.compute_flops,
            });
        }
        Ok(())
    }
}

/// The three delay terms of one expert invocation, in seconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DelayTerms {
    pub downlink_s: f64,
    pub compute_s: f64,
    pub uplink_s: f64,
}

impl DelayTerms {
    pub fn new(payload_bits: f64, rate_downlink_bps: f64, flops: f64, compute_flops: f64, rate_uplink_bps: f64) -> Self {
        Self {
            downlink_s: payload_bits / rate_downlink_bps,
            compute_s: flops / compute_flops,
            uplink_s: payload_bits / rate_uplink_bps,
        }
    }

    pub fn total(&self) -> f64 {
        self.downlink_s + self.compute_s + self.uplink_s
    }
}

/// Downlink + compute + uplink delay for one expert, or [`UNREACHABLE`]
/// when either link rate is zero. Base-station compute is not counted.
pub fn expert_delay(profile: &DeviceProfile, realization: &ChannelRealization, cost: &ExpertCost) -> f64 {
    if realization.rate_downlink_bps <= 0.0 || realization.rate_uplink_bps <= 0.0 {
        return UNREACHABLE;
    }
    DelayTerms::new(
        payload_bits(cost),
        realization.rate_downlink_bps,
        expert_flops(cost),
        profile.compute_flops,
        realization.rate_uplink_bps,
    )
    .total()
}

/// Per-expert delays of one (token, block) step.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LatencyVector {
    pub token_id: usize,
    pub block_id: usize,
    pub per_expert_delay_s: Vec<f64>,
}

impl LatencyVector {
    pub fn len(&self) -> usize {
        self.per_expert_delay_s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.per_expert_delay_s.is_empty()
    }

    /// Largest delay over `experts`; zero for an empty set.
    pub fn max_over(&self, experts: &[usize]) -> f64 {
        experts
            .iter()
            .map(|&q| self.per_expert_delay_s[q])
            .fold(0.0, f64::max)
    }
}

pub fn latency_vector(
    profiles: &[DeviceProfile],
    realizations: &[ChannelRealization],
    cost: &ExpertCost,
    token_id: usize,
    block_id: usize,
) -> Result<LatencyVector, ComputeError> {
    if profiles.len() != realizations.len() {
        return Err(ComputeError::LengthMismatch {
            profiles: profiles.len(),
            realizations: realizations.len(),
        });
    }
    if profiles.is_empty() {
        return Err(ComputeError::Empty);
    }
    let per_expert_delay_s = profiles
        .iter()
        .zip(realizations)
        .map(|(p, r)| {
            if p.device_id != r.device_id {
                return Err(ComputeError::DeviceMismatch { profile: p.device_id, realization: r.device_id });
            }
            Ok(expert_delay(p, r, cost))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(LatencyVector { token_id, block_id, per_expert_delay_s })
}
