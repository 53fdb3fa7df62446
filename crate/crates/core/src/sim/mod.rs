//! End-to-end driver: prompts stream through the blocks over realized
//! channels, each step is routed by a policy, and step latencies are
//! accumulated into prompt and scenario metrics.
//!
//! All randomness is keyed by (master seed, prompt, token, block), never by
//! policy state, so every policy and threshold sees the same channel draws
//! and token embeddings. The hidden state carried from one block to the next
//! is the output under undisturbed top-k routing; the policy's own output is
//! evaluated on the same input but does not steer later gating.

mod config;
mod summary;

use alloc::vec::Vec;

use rand::Rng;
use thiserror::Error;

pub use config::{
    BandwidthSpec, Coherence, ComputeSpec, ConfigError, DeviceConfig, DistanceSpec, PolicySpec, PromptLength,
    Scenario, ScenarioConfig, ToyModelConfig,
};
pub use summary::{percentile_nearest_rank, PolicySummary, ScenarioSummary, SummaryAccumulator, SweepRow, SweepTable};

use crate::channel::{realize_channels, ChannelError};
use crate::compute_model::{latency_vector, ComputeError, LatencyVector};
use crate::moe_core::{evaluate_active, gate_forward, MoeError, Token};
use crate::policy::{baseline_select, select, PolicyError, PolicyKind, SelectionDecision};
use crate::{derive_seed, seeded_rng, streams};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("channel: {0}")]
    Channel(#[from] ChannelError),
    #[error("compute model: {0}")]
    Compute(#[from] ComputeError),
    #[error("moe: {0}")]
    Moe(#[from] MoeError),
    #[error("policy: {0}")]
    Policy(#[from] PolicyError),
    #[error("decisions cover {0} and {1} experts")]
    DecisionMismatch(usize, usize),
    #[error("threshold list is empty")]
    EmptySweep,
    #[error("invalid threshold {0}")]
    InvalidThreshold(f64),
}

/// One (token, block) step.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TokenTrace {
    pub token_id: usize,
    pub block_id: usize,
    pub gate_weights: Vec<f64>,
    pub delays: LatencyVector,
    pub decision: SelectionDecision,
    /// Experts whose forward pass actually ran.
    pub evaluated_experts: Vec<usize>,
    /// Max delay over the decision's active experts.
    pub token_latency_s: f64,
    /// Weight mass shared with the undisturbed top-k decision.
    pub weight_fidelity: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PromptMetrics {
    pub prompt_id: usize,
    pub token_count: usize,
    pub prompt_latency_s: f64,
    pub traces: Vec<TokenTrace>,
    pub drop_count: usize,
    pub mean_active_experts: f64,
    pub mean_weight_fidelity: f64,
}

impl PromptMetrics {
    pub fn steps(&self) -> usize {
        self.traces.len()
    }
}

/// Weight mass on experts active in both decisions: `sum min(w_a, w_b)`.
pub fn weight_fidelity(a: &SelectionDecision, b: &SelectionDecision) -> Result<f64, SimError> {
    let (wa, wb) = (&a.combination_weights, &b.combination_weights);
    if wa.len() != wb.len() {
        return Err(SimError::DecisionMismatch(wa.len(), wb.len()));
    }
    Ok(a
        .active_experts
        .iter()
        .filter(|q| b.active_experts.contains(q))
        .map(|&q| wa[q].min(wb[q]))
        .sum())
}

/// Unit-variance entries, uniform on `[-sqrt 3, sqrt 3]`.
fn random_token<R: Rng>(dim: usize, rng: &mut R) -> Token {
    let half_width = libm::sqrt(3.0);
    Token::new((0..dim).map(|_| (2.0 * rng.random::<f64>() - 1.0) * half_width).collect())
}

impl Scenario {
    pub fn prompt_seed(&self, prompt_id: usize) -> u64 {
        derive_seed(self.config.master_seed, streams::PROMPT, prompt_id as u64, 0)
    }

    pub fn prompt_length(&self, prompt_id: usize) -> usize {
        match self.config.prompt_length {
            PromptLength::Fixed(p) => p,
            PromptLength::Range { min, max } => {
                let mut rng = seeded_rng(derive_seed(self.prompt_seed(prompt_id), streams::PROMPT_LEN, 0, 0));
                min + (rng.random::<u64>() % (max - min + 1) as u64) as usize
            }
        }
    }

    /// Initial embedding of token `token_id` of a prompt.
    pub fn prompt_token(&self, prompt_id: usize, token_id: usize) -> Token {
        let mut rng = seeded_rng(derive_seed(self.prompt_seed(prompt_id), streams::TOKENS, token_id as u64, 0));
        random_token(self.config.toy_model.embedding_dim, &mut rng)
    }

    fn channel_seed(&self, prompt_id: usize, token_id: usize, block_id: usize) -> u64 {
        let prompt = self.prompt_seed(prompt_id);
        match self.config.coherence {
            Coherence::PerStep => derive_seed(prompt, streams::CHANNEL, token_id as u64, block_id as u64),
            Coherence::PerToken => derive_seed(prompt, streams::CHANNEL, token_id as u64, 0),
            Coherence::PerPrompt => derive_seed(prompt, streams::CHANNEL, 0, 0),
            Coherence::Static => derive_seed(self.config.master_seed, streams::CHANNEL, 0, 0),
        }
    }

    /// Per-expert delays at one (prompt, token, block) coordinate.
    pub fn step_delays(&self, prompt_id: usize, token_id: usize, block_id: usize) -> Result<LatencyVector, SimError> {
        let mut rng = seeded_rng(self.channel_seed(prompt_id, token_id, block_id));
        let realizations = realize_channels(&self.budgets(), &self.config.carrier, &mut rng)?;
        Ok(latency_vector(&self.profiles, &realizations, &self.config.model, token_id, block_id)?)
    }

    /// Runs one prompt under `policy`.
    pub fn run_prompt(&self, policy: &PolicySpec, prompt_id: usize) -> Result<PromptMetrics, SimError> {
        let cfg = policy.config();
        cfg.validate(self.config.num_devices())?;
        let p = self.prompt_length(prompt_id);
        let b = self.blocks.len();
        let mut traces = Vec::with_capacity(p * b);

        for token_id in 0..p {
            let mut token = self.prompt_token(prompt_id, token_id);
            for (block_id, block) in self.blocks.iter().enumerate() {
                let delays = self.step_delays(prompt_id, token_id, block_id)?;
                let mixed = block.mix(&token)?;
                let gate = gate_forward(&mixed, block)?;
                let decision = select(&gate, &delays, &cfg, policy.kind)?;
                let reference = baseline_select(&gate, &delays, &cfg, PolicyKind::VanillaTopK)?;

                let (output, evaluated) = evaluate_active(&mixed, block, &decision)?;
                let next = if reference.same_selection(&decision) {
                    output
                } else {
                    evaluate_active(&mixed, block, &reference)?.0
                };
                token = Token::new(next);

                traces.push(TokenTrace {
                    token_id,
                    block_id,
                    token_latency_s: delays.max_over(&decision.active_experts),
                    weight_fidelity: weight_fidelity(&reference, &decision)?,
                    gate_weights: gate.weights,
                    delays,
                    decision,
                    evaluated_experts: evaluated,
                });
            }
        }

        let steps = traces.len() as f64;
        let prompt_latency_s = traces.iter().map(|t| t.token_latency_s).sum();
        let drop_count = traces.iter().map(|t| t.decision.drops()).sum();
        let mean_active_experts = traces.iter().map(|t| t.decision.active_experts.len() as f64).sum::<f64>() / steps;
        let mean_weight_fidelity = traces.iter().map(|t| t.weight_fidelity).sum::<f64>() / steps;
        Ok(PromptMetrics {
            prompt_id,
            token_count: p,
            prompt_latency_s,
            traces,
            drop_count,
            mean_active_experts,
            mean_weight_fidelity,
        })
    }

    /// Policies in run order: the configured policy, then each baseline.
    pub fn policies(&self) -> Vec<PolicySpec> {
        let mut out = alloc::vec![self.config.policy.clone()];
        out.extend(self.config.baselines.iter().map(|&k| self.config.policy.with_kind(k)));
        out
    }

    /// Runs every replication under every policy, handing each prompt's
    /// metrics to `sink` before it is folded into the summary.
    pub fn run_with<F>(&self, mut sink: F) -> Result<ScenarioSummary, SimError>
    where
        F: FnMut(&PolicySpec, &PromptMetrics),
    {
        let mut summaries = Vec::new();
        for spec in self.policies() {
            let mut acc = SummaryAccumulator::new(spec.clone());
            for prompt_id in 0..self.config.replications {
                let m = self.run_prompt(&spec, prompt_id)?;
                sink(&spec, &m);
                acc.push(&m);
            }
            summaries.push(acc.finish());
        }
        Ok(ScenarioSummary::new(self.config.replications, summaries))
    }

    pub fn run(&self) -> Result<ScenarioSummary, SimError> {
        self.run_with(|_, _| {})
    }

    /// WDMoE under each threshold (ascending, deduplicated) with shared
    /// random numbers. Reductions and weight fidelity are measured against
    /// the same policy at threshold 0.
    pub fn threshold_sweep(&self, thetas: &[f64]) -> Result<SweepTable, SimError> {
        if thetas.is_empty() {
            return Err(SimError::EmptySweep);
        }
        if let Some(&bad) = thetas.iter().find(|t| !(t.is_finite() && **t >= 0.0)) {
            return Err(SimError::InvalidThreshold(bad));
        }
        let mut grid = thetas.to_vec();
        grid.sort_by(f64::total_cmp);
        grid.dedup();

        let base_spec = self.config.policy.with_kind(PolicyKind::Wdmoe);
        let zero = base_spec.with_threshold(0.0);
        let specs: Vec<PolicySpec> = grid.iter().map(|&t| base_spec.with_threshold(t)).collect();
        let mut zero_acc = SummaryAccumulator::new(zero.clone());
        let mut accs: Vec<SummaryAccumulator> = specs.iter().cloned().map(SummaryAccumulator::new).collect();
        let mut fidelity_sums = alloc::vec![0.0; grid.len()];
        let mut steps = 0usize;

        for prompt_id in 0..self.config.replications {
            let base = self.run_prompt(&zero, prompt_id)?;
            zero_acc.push(&base);
            steps += base.steps();
            for ((spec, acc), fid) in specs.iter().zip(&mut accs).zip(&mut fidelity_sums) {
                let m = if spec.threshold == 0.0 { base.clone() } else { self.run_prompt(spec, prompt_id)? };
                for (a, b) in base.traces.iter().zip(&m.traces) {
                    *fid += weight_fidelity(&a.decision, &b.decision)?;
                }
                acc.push(&m);
            }
        }

        let zero_summary = zero_acc.finish();
        let summaries: Vec<PolicySummary> = accs.into_iter().map(SummaryAccumulator::finish).collect();
        let rows = grid
            .iter()
            .zip(&summaries)
            .zip(&fidelity_sums)
            .map(|((&theta, s), fid)| SweepRow {
                theta,
                mean_latency_s: s.mean_latency_s,
                reduction_pct: if theta == 0.0 {
                    0.0
                } else {
                    100.0 * (zero_summary.mean_latency_s - s.mean_latency_s) / zero_summary.mean_latency_s
                },
                mean_active_experts: s.mean_active_experts,
                mean_weight_fidelity: fid / steps as f64,
            })
            .collect();
        Ok(SweepTable { rows, summaries, baseline: zero_summary })
    }
}

/// Convenience wrapper: resolve `config` and run one prompt of its policy.
pub fn run_prompt(config: &ScenarioConfig, prompt_id: usize) -> Result<PromptMetrics, SimError> {
    let scenario = Scenario::new(config.clone())?;
    scenario.run_prompt(&config.policy, prompt_id)
}

pub fn run_scenario(config: &ScenarioConfig) -> Result<ScenarioSummary, SimError> {
    Scenario::new(config.clone())?.run()
}

pub fn threshold_sweep(config: &ScenarioConfig, thetas: &[f64]) -> Result<SweepTable, SimError> {
    Scenario::new(config.clone())?.threshold_sweep(thetas)
}
