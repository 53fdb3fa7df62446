use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::Rng;
use thiserror::Error;

use crate::channel::{validate_budgets, CarrierConfig, ChannelError, LinkBudget};
use crate::compute_model::{DeviceProfile, ExpertCost};
use crate::moe_core::{Activation, MoeBlockParams};
use crate::policy::{DropComparison, PolicyConfig, PolicyError, PolicyKind};
use crate::{derive_seed, seeded_rng, streams};

/// A configuration problem, tagged with the dotted path of the offending field.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("{field}: {message}")]
pub struct ConfigError {
    pub field: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self { field: field.into(), message: message.into() }
    }
}

fn field_err(field: &str, e: impl ToString) -> ConfigError {
    ConfigError::new(field, e.to_string())
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case", deny_unknown_fields))]
pub enum PromptLength {
    Fixed(usize),
    /// Uniform over `min..=max` tokens per prompt.
    Range { min: usize, max: usize },
}

/// How often channel gains are redrawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Coherence {
    /// Fresh draw for every (token, block) step.
    #[default]
    PerStep,
    PerToken,
    PerPrompt,
    /// One draw for the whole scenario.
    Static,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case", deny_unknown_fields))]
pub enum DistanceSpec {
    Uniform { min_m: f64, max_m: f64 },
    Explicit(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case", deny_unknown_fields))]
pub enum ComputeSpec {
    LogUniform { min_flops: f64, max_flops: f64 },
    Explicit(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case", deny_unknown_fields))]
pub enum BandwidthSpec {
    #[default]
    Even,
    SharesHz(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct DeviceConfig {
    pub count: usize,
    /// Base-station transmit power, used on every downlink.
    pub bs_tx_power_w: f64,
    /// Device transmit power, used on every uplink.
    pub device_tx_power_w: f64,
    pub distance: DistanceSpec,
    pub compute: ComputeSpec,
    pub bandwidth: BandwidthSpec,
}

impl Default for DeviceConfig {
    fn default() -> Self {
        Self {
            count: 8,
            bs_tx_power_w: 10.0,
            device_tx_power_w: 0.2,
            distance: DistanceSpec::Uniform { min_m: 10.0, max_m: 300.0 },
            compute: ComputeSpec::LogUniform { min_flops: 5e12, max_flops: 5e13 },
            bandwidth: BandwidthSpec::Even,
        }
    }
}

/// Dimensions of the small numeric MoE that produces gate outputs. These
/// are independent of the latency model's [`ExpertCost`] dimensions.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct ToyModelConfig {
    pub embedding_dim: usize,
    pub hidden_dim: usize,
    pub activation: Activation,
}

impl Default for ToyModelConfig {
    fn default() -> Self {
        Self { embedding_dim: 16, hidden_dim: 32, activation: Activation::Silu }
    }
}

/// Policy kind plus its parameters, as written in a scenario file.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct PolicySpec {
    pub kind: PolicyKind,
    pub top_k: usize,
    pub threshold: f64,
    pub max_drops: usize,
    pub drop_comparison: DropComparison,
}

impl Default for PolicySpec {
    fn default() -> Self {
        Self::new(PolicyKind::Wdmoe, &PolicyConfig::default())
    }
}

impl PolicySpec {
    pub fn new(kind: PolicyKind, cfg: &PolicyConfig) -> Self {
        Self {
            kind,
            top_k: cfg.top_k,
            threshold: cfg.threshold,
            max_drops: cfg.max_drops,
            drop_comparison: cfg.drop_comparison,
        }
    }

    pub fn config(&self) -> PolicyConfig {
        PolicyConfig {
            top_k: self.top_k,
            threshold: self.threshold,
            max_drops: self.max_drops,
            drop_comparison: self.drop_comparison,
        }
    }

    pub fn with_kind(&self, kind: PolicyKind) -> Self {
        Self { kind, ..self.clone() }
    }

    pub fn with_threshold(&self, threshold: f64) -> Self {
        Self { threshold, ..self.clone() }
    }
}

/// Everything needed to reproduce a simulation run.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct ScenarioConfig {
    pub master_seed: u64,
    pub replications: usize,
    pub blocks: usize,
    pub coherence: Coherence,
    pub prompt_length: PromptLength,
    pub model: ExpertCost,
    pub toy_model: ToyModelConfig,
    pub carrier: CarrierConfig,
    pub devices: DeviceConfig,
    pub policy: PolicySpec,
    /// Extra policies run on the same seeds for comparison.
    pub baselines: Vec<PolicyKind>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            master_seed: 2024,
            replications: 200,
            blocks: 32,
            coherence: Coherence::PerStep,
            prompt_length: PromptLength::Fixed(64),
            model: ExpertCost::default(),
            toy_model: ToyModelConfig::default(),
            carrier: CarrierConfig::default(),
            devices: DeviceConfig::default(),
            policy: PolicySpec::default(),
            baselines: alloc::vec![PolicyKind::VanillaTopK, PolicyKind::LatencyGreedy],
        }
    }
}

fn positive_finite(field: &str, v: f64) -> Result<(), ConfigError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(ConfigError::new(field, format!("must be positive and finite, got {v}")))
    }
}

fn check_range(field: &str, lo: f64, hi: f64) -> Result<(), ConfigError> {
    positive_finite(field, lo)?;
    positive_finite(field, hi)?;
    if lo > hi {
        return Err(ConfigError::new(field, format!("min {lo} exceeds max {hi}")));
    }
    Ok(())
}

fn check_list(field: &str, values: &[f64], count: usize) -> Result<(), ConfigError> {
    if values.len() != count {
        return Err(ConfigError::new(
            field,
            format!("expected {count} entries (devices.count), got {}", values.len()),
        ));
    }
    values.iter().try_for_each(|&v| positive_finite(field, v))
}

fn policy_field(e: &PolicyError) -> &'static str {
    match e {
        PolicyError::TopKOutOfRange { .. } => "policy.top_k",
        PolicyError::TooManyDrops { .. } => "policy.max_drops",
        PolicyError::InvalidThreshold(_) => "policy.threshold",
        _ => "policy",
    }
}

impl ScenarioConfig {
    pub fn num_devices(&self) -> usize {
        self.devices.count
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.master_seed > i64::MAX as u64 {
            return Err(ConfigError::new("master_seed", "must not exceed 2^63 - 1"));
        }
        if self.replications == 0 {
            return Err(ConfigError::new("replications", "must be at least 1"));
        }
        if self.blocks == 0 {
            return Err(ConfigError::new("blocks", "must be at least 1"));
        }
        match self.prompt_length {
            PromptLength::Fixed(0) => return Err(ConfigError::new("prompt_length.fixed", "must be at least 1")),
            PromptLength::Range { min, max } if min == 0 || min > max => {
                return Err(ConfigError::new("prompt_length.range", format!("need 1 <= min <= max, got {min}..={max}")))
            }
            _ => {}
        }
        self.model.validate().map_err(|e| field_err("model", e))?;
        if self.toy_model.embedding_dim == 0 {
            return Err(ConfigError::new("toy_model.embedding_dim", "must be at least 1"));
        }
        if self.toy_model.hidden_dim == 0 {
            return Err(ConfigError::new("toy_model.hidden_dim", "must be at least 1"));
        }
        self.carrier.validate().map_err(|e| field_err("carrier", e))?;

        let d = &self.devices;
        if d.count == 0 {
            return Err(ConfigError::new("devices.count", "must be at least 1"));
        }
        positive_finite("devices.bs_tx_power_w", d.bs_tx_power_w)?;
        positive_finite("devices.device_tx_power_w", d.device_tx_power_w)?;
        match &d.distance {
            DistanceSpec::Uniform { min_m, max_m } => check_range("devices.distance.uniform", *min_m, *max_m)?,
            DistanceSpec::Explicit(v) => check_list("devices.distance.explicit", v, d.count)?,
        }
        match &d.compute {
            ComputeSpec::LogUniform { min_flops, max_flops } => {
                check_range("devices.compute.log_uniform", *min_flops, *max_flops)?
            }
            ComputeSpec::Explicit(v) => check_list("devices.compute.explicit", v, d.count)?,
        }
        if let BandwidthSpec::SharesHz(v) = &d.bandwidth {
            check_list("devices.bandwidth.shares_hz", v, d.count)?;
            let total: f64 = v.iter().sum();
            if total > self.carrier.total_bandwidth_hz * (1.0 + 1e-12) {
                return Err(ConfigError::new(
                    "devices.bandwidth.shares_hz",
                    format!(
                        "sum of bandwidth shares {total} Hz exceeds carrier.total_bandwidth_hz {} Hz",
                        self.carrier.total_bandwidth_hz
                    ),
                ));
            }
        }

        let n = d.count;
        self.policy.config().validate(n).map_err(|e| field_err(policy_field(&e), e))?;
        Ok(())
    }
}

/// Static per-scenario state derived from the config and master seed:
/// device profiles and the per-block MoE parameters.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub profiles: Vec<DeviceProfile>,
    pub blocks: Vec<MoeBlockParams>,
}

fn draw_uniform<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

impl Scenario {
    pub fn new(config: ScenarioConfig) -> Result<Self, ConfigError> {
        config.validate()?;
        let n = config.num_devices();
        let seed = config.master_seed;

        let mut rng = seeded_rng(derive_seed(seed, streams::DEVICES, 0, 0));
        let distances: Vec<f64> = match &config.devices.distance {
            DistanceSpec::Uniform { min_m, max_m } => (0..n).map(|_| draw_uniform(&mut rng, *min_m, *max_m)).collect(),
            DistanceSpec::Explicit(v) => v.clone(),
        };
        let mut rng = seeded_rng(derive_seed(seed, streams::DEVICES, 1, 0));
        let compute: Vec<f64> = match &config.devices.compute {
            ComputeSpec::LogUniform { min_flops, max_flops } => {
                let (lo, hi) = (libm::log(*min_flops), libm::log(*max_flops));
                (0..n).map(|_| libm::exp(draw_uniform(&mut rng, lo, hi))).collect()
            }
            ComputeSpec::Explicit(v) => v.clone(),
        };
        let bandwidth: Vec<f64> = match &config.devices.bandwidth {
            BandwidthSpec::Even => alloc::vec![config.carrier.even_share_hz(n); n],
            BandwidthSpec::SharesHz(v) => v.clone(),
        };

        let profiles: Vec<DeviceProfile> = (0..n)
            .map(|q| DeviceProfile {
                device_id: q,
                compute_flops: compute[q],
                link: LinkBudget {
                    device_id: q,
                    distance_m: distances[q],
                    bandwidth_hz: bandwidth[q],
                    tx_power_downlink_w: config.devices.bs_tx_power_w,
                    tx_power_uplink_w: config.devices.device_tx_power_w,
                },
            })
            .collect();
        let budgets: Vec<LinkBudget> = profiles.iter().map(|p| p.link.clone()).collect();
        validate_budgets(&budgets, &config.carrier).map_err(|e| match e {
            ChannelError::BandwidthExceeded { .. } => field_err("devices.bandwidth", e),
            other => field_err("devices", other),
        })?;

        let mut rng = seeded_rng(derive_seed(seed, streams::MODEL, 0, 0));
        let toy = &config.toy_model;
        let blocks = (0..config.blocks)
            .map(|_| MoeBlockParams::random(toy.embedding_dim, toy.hidden_dim, n, toy.activation, &mut rng))
            .collect();

        Ok(Self { config, profiles, blocks })
    }

    pub fn budgets(&self) -> Vec<LinkBudget> {
        self.profiles.iter().map(|p| p.link.clone()).collect()
    }
}
