use alloc::vec::Vec;

use super::{PolicySpec, PromptMetrics};

/// Nearest-rank percentile of an ascending slice; `q` in (0, 1].
pub fn percentile_nearest_rank(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let rank = libm::ceil(q * sorted.len() as f64) as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    match n {
        0 => f64::NAN,
        _ if n % 2 == 1 => sorted[n / 2],
        _ => 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]),
    }
}

/// Aggregate metrics of one policy over all replications.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PolicySummary {
    pub policy: PolicySpec,
    pub prompts: usize,
    pub steps: usize,
    pub mean_latency_s: f64,
    pub median_latency_s: f64,
    pub p95_latency_s: f64,
    /// Drops per (token, block) step.
    pub mean_drops_per_token: f64,
    /// Active experts per (token, block) step.
    pub mean_active_experts: f64,
    /// Performance proxy: weight mass shared with undisturbed top-k routing,
    /// averaged per step.
    pub mean_weight_fidelity: f64,
    /// Per-prompt end-to-end latencies in replication order.
    pub prompt_latencies_s: Vec<f64>,
}

/// Folds prompt metrics one at a time so traces need not be retained.
#[derive(Debug, Clone)]
pub struct SummaryAccumulator {
    policy: PolicySpec,
    latencies: Vec<f64>,
    steps: usize,
    drops: usize,
    active: f64,
    fidelity: f64,
}

impl SummaryAccumulator {
    pub fn new(policy: PolicySpec) -> Self {
        Self { policy, latencies: Vec::new(), steps: 0, drops: 0, active: 0.0, fidelity: 0.0 }
    }

    pub fn push(&mut self, m: &PromptMetrics) {
        self.latencies.push(m.prompt_latency_s);
        self.steps += m.steps();
        self.drops += m.drop_count;
        for t in &m.traces {
            self.active += t.decision.active_experts.len() as f64;
            self.fidelity += t.weight_fidelity;
        }
    }

    pub fn finish(self) -> PolicySummary {
        let prompts = self.latencies.len();
        let mut sorted = self.latencies.clone();
        sorted.sort_by(f64::total_cmp);
        let steps = self.steps as f64;
        PolicySummary {
            policy: self.policy,
            prompts,
            steps: self.steps,
            mean_latency_s: self.latencies.iter().sum::<f64>() / prompts as f64,
            median_latency_s: median(&sorted),
            p95_latency_s: percentile_nearest_rank(&sorted, 0.95),
            mean_drops_per_token: self.drops as f64 / steps,
            mean_active_experts: self.active / steps,
            mean_weight_fidelity: self.fidelity / steps,
            prompt_latencies_s: self.latencies,
        }
    }
}

/// Per-policy summaries; the first entry is the configured policy.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ScenarioSummary {
    pub replications: usize,
    pub policies: Vec<PolicySummary>,
    /// Mean latency of each policy divided by that of the first.
    pub latency_ratio_vs_primary: Vec<f64>,
}

impl ScenarioSummary {
    pub fn new(replications: usize, policies: Vec<PolicySummary>) -> Self {
        let primary = policies.first().map_or(f64::NAN, |p| p.mean_latency_s);
        let latency_ratio_vs_primary = policies.iter().map(|p| p.mean_latency_s / primary).collect();
        Self { replications, policies, latency_ratio_vs_primary }
    }

    pub fn primary(&self) -> &PolicySummary {
        &self.policies[0]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SweepRow {
    pub theta: f64,
    pub mean_latency_s: f64,
    /// `100 * (mean_0 - mean_theta) / mean_0`.
    pub reduction_pct: f64,
    pub mean_active_experts: f64,
    /// Weight mass retained from the threshold-0 decision, per step.
    pub mean_weight_fidelity: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SweepTable {
    /// Ascending in theta.
    pub rows: Vec<SweepRow>,
    /// One summary per row.
    pub summaries: Vec<PolicySummary>,
    /// The threshold-0 reference run.
    pub baseline: PolicySummary,
}
