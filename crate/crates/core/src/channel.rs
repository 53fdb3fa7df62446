//! Base-station/device radio links: log-distance path loss, Rayleigh
//! amplitude fading and Shannon-capacity link rates.
//!
//! Units: carrier frequency in GHz, distance in meters, bandwidth in Hz,
//! power in watts. Gains are linear amplitudes; they enter the rate squared.

use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::Rng;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ChannelError {
    #[error("{name} must be positive and finite, got {value}")]
    NonPositive { name: &'static str, value: f64 },
    #[error("{name} must be finite, got {value}")]
    NonFinite { name: &'static str, value: f64 },
    #[error("gain must be non-negative and finite, got {0}")]
    InvalidGain(f64),
    #[error("allocated bandwidth {allocated_hz} Hz exceeds the total {total_hz} Hz")]
    BandwidthExceeded { allocated_hz: f64, total_hz: f64 },
    #[error("no link budgets supplied")]
    NoDevices,
}

fn positive(name: &'static str, value: f64) -> Result<f64, ChannelError> {
    if value.is_finite() && value > 0.0 {
        Ok(value)
    } else {
        Err(ChannelError::NonPositive { name, value })
    }
}

/// System-wide radio parameters.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct CarrierConfig {
    pub carrier_frequency_ghz: f64,
    pub noise_psd_dbm_per_hz: f64,
    pub total_bandwidth_hz: f64,
}

impl Default for CarrierConfig {
    fn default() -> Self {
        Self {
            carrier_frequency_ghz: 3.5,
            noise_psd_dbm_per_hz: -174.0,
            total_bandwidth_hz: 100e6,
        }
    }
}

impl CarrierConfig {
    pub fn validate(&self) -> Result<(), ChannelError> {
        positive("carrier_frequency_ghz", self.carrier_frequency_ghz)?;
        positive("total_bandwidth_hz", self.total_bandwidth_hz)?;
        if !self.noise_psd_dbm_per_hz.is_finite() {
            return Err(ChannelError::NonFinite {
                name: "noise_psd_dbm_per_hz",
                value: self.noise_psd_dbm_per_hz,
            });
        }
        positive("noise_psd_w_per_hz", self.noise_psd_w_per_hz())?;
        Ok(())
    }

    /// Linear noise power spectral density N0 in W/Hz.
    pub fn noise_psd_w_per_hz(&self) -> f64 {
        libm::pow(10.0, (self.noise_psd_dbm_per_hz - 30.0) / 10.0)
    }

    /// Per-device bandwidth when the total is split evenly over `devices`.
    pub fn even_share_hz(&self, devices: usize) -> f64 {
        self.total_bandwidth_hz / devices as f64
    }
}

/// Static link parameters of one device.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LinkBudget {
    pub device_id: usize,
    pub distance_m: f64,
    pub bandwidth_hz: f64,
    pub tx_power_downlink_w: f64,
    pub tx_power_uplink_w: f64,
}

impl LinkBudget {
    pub fn validate(&self) -> Result<(), ChannelError> {
        positive("distance_m", self.distance_m)?;
        positive("bandwidth_hz", self.bandwidth_hz)?;
        positive("tx_power_downlink_w", self.tx_power_downlink_w)?;
        positive("tx_power_uplink_w", self.tx_power_uplink_w)?;
        Ok(())
    }
}

/// Checks every budget and that their bandwidths fit in the carrier total.
pub fn validate_budgets(budgets: &[LinkBudget], carrier: &CarrierConfig) -> Result<(), ChannelError> {
    if budgets.is_empty() {
        return Err(ChannelError::NoDevices);
    }
    for b in budgets {
        b.validate()?;
    }
    let allocated_hz: f64 = budgets.iter().map(|b| b.bandwidth_hz).sum();
    // Even splits of the total may round up by an ulp or two.
    if allocated_hz > carrier.total_bandwidth_hz * (1.0 + 1e-12) {
        return Err(ChannelError::BandwidthExceeded {
            allocated_hz,
            total_hz: carrier.total_bandwidth_hz,
        });
    }
    Ok(())
}

/// One sampled up/downlink state for a device.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ChannelRealization {
    pub device_id: usize,
    pub gain_downlink: f64,
    pub gain_uplink: f64,
    pub rate_downlink_bps: f64,
    pub rate_uplink_bps: f64,
}

/// `32.4 + 20 log10(f_GHz) + 20 log10(d_m)` in dB.
pub fn path_loss_db(distance_m: f64, carrier_frequency_ghz: f64) -> Result<f64, ChannelError> {
    positive("distance_m", distance_m)?;
    positive("carrier_frequency_ghz", carrier_frequency_ghz)?;
    Ok(32.4 + 20.0 * libm::log10(carrier_frequency_ghz) + 20.0 * libm::log10(distance_m))
}

/// Mean fading amplitude `10^(-PL/20)` at the given distance.
pub fn mean_gain(distance_m: f64, carrier: &CarrierConfig) -> Result<f64, ChannelError> {
    let pl = path_loss_db(distance_m, carrier.carrier_frequency_ghz)?;
    Ok(libm::pow(10.0, -pl / 20.0))
}

/// Rayleigh scale whose distribution mean is `mean`.
pub fn rayleigh_scale(mean: f64) -> f64 {
    mean / libm::sqrt(PI / 2.0)
}

/// Draws a Rayleigh amplitude whose mean equals [`mean_gain`].
///
/// Inverse-CDF sampling: `sigma * sqrt(-2 ln u)` with `u` uniform on (0, 1].
pub fn sample_gain<R: Rng + ?Sized>(
    distance_m: f64,
    carrier: &CarrierConfig,
    rng: &mut R,
) -> Result<f64, ChannelError> {
    let sigma = rayleigh_scale(mean_gain(distance_m, carrier)?);
    let u = 1.0 - rng.random::<f64>();
    Ok(sigma * libm::sqrt(-2.0 * libm::log(u)))
}

/// Shannon rate `B log2(1 + P g^2 / (N0 B))` in bits/s.
pub fn link_rate(
    bandwidth_hz: f64,
    tx_power_w: f64,
    gain: f64,
    noise_psd_w_per_hz: f64,
) -> Result<f64, ChannelError> {
    positive("bandwidth_hz", bandwidth_hz)?;
    positive("tx_power_w", tx_power_w)?;
    positive("noise_psd_w_per_hz", noise_psd_w_per_hz)?;
    if !(gain.is_finite() && gain >= 0.0) {
        return Err(ChannelError::InvalidGain(gain));
    }
    let snr = tx_power_w * gain * gain / (noise_psd_w_per_hz * bandwidth_hz);
    // log1p keeps tiny SNRs from rounding to exactly zero rate.
    Ok(bandwidth_hz * libm::log1p(snr) / core::f64::consts::LN_2)
}

/// Builds a realization from already-drawn gains.
pub fn realization_from_gains(
    budget: &LinkBudget,
    carrier: &CarrierConfig,
    gain_downlink: f64,
    gain_uplink: f64,
) -> Result<ChannelRealization, ChannelError> {
    let n0 = carrier.noise_psd_w_per_hz();
    Ok(ChannelRealization {
        device_id: budget.device_id,
        gain_downlink,
        gain_uplink,
        rate_downlink_bps: link_rate(budget.bandwidth_hz, budget.tx_power_downlink_w, gain_downlink, n0)?,
        rate_uplink_bps: link_rate(budget.bandwidth_hz, budget.tx_power_uplink_w, gain_uplink, n0)?,
    })
}

/// Samples independent downlink then uplink gains for one device.
pub fn realize_channel<R: Rng + ?Sized>(
    budget: &LinkBudget,
    carrier: &CarrierConfig,
    rng: &mut R,
) -> Result<ChannelRealization, ChannelError> {
    budget.validate()?;
    let down = sample_gain(budget.distance_m, carrier, rng)?;
    let up = sample_gain(budget.distance_m, carrier, rng)?;
    realization_from_gains(budget, carrier, down, up)
}

/// One realization per budget, drawn in list order from `rng`.
pub fn realize_channels<R: Rng + ?Sized>(
    budgets: &[LinkBudget],
    carrier: &CarrierConfig,
    rng: &mut R,
) -> Result<Vec<ChannelRealization>, ChannelError> {
    if budgets.is_empty() {
        return Err(ChannelError::NoDevices);
    }
    budgets.iter().map(|b| realize_channel(b, carrier, rng)).collect()
}
