//! Expert selection policies.
//!
//! The WDMoE policy ranks experts by gate weight, keeps the top `k`, and
//! then repeatedly scores the survivors by weight-to-latency ratio
//! (WLR = weight / delay). The decision variable
//! `kappa = min WLR / (min WLR + max WLR)` is compared against the threshold
//! `theta`; when it falls below, the survivor with the lowest WLR is dropped.
//! Surviving experts are recombined with a softmax over their original
//! logits, so dropped experts carry exactly zero weight.
//!
//! Ties are resolved toward the lowest device index everywhere: in top-k
//! ranking, in latency ranking, and when choosing which minimal-WLR expert
//! to drop.

use alloc::vec::Vec;
use core::cmp::Ordering;
use core::fmt;

use thiserror::Error;

use crate::compute_model::{is_unreachable, LatencyVector};
use crate::moe_core::{softmax, GateOutput};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PolicyError {
    #[error("length mismatch: {weights} weights vs {delays} delays")]
    LengthMismatch { weights: usize, delays: usize },
    #[error("top_k = {k} out of range 1..={n}")]
    TopKOutOfRange { k: usize, n: usize },
    #[error("max_drops = {max_drops} must be at most top_k - 1 = {limit}")]
    TooManyDrops { max_drops: usize, limit: usize },
    #[error("threshold must be finite and non-negative, got {0}")]
    InvalidThreshold(f64),
    #[error("kappa undefined: WLR vector is empty or all zero")]
    DegenerateWlr,
    #[error("negative or non-finite WLR entry {0}")]
    InvalidWlr(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum PolicyKind {
    #[default]
    Wdmoe,
    #[cfg_attr(feature = "serde", serde(rename = "vanilla_topk"))]
    VanillaTopK,
    LatencyGreedy,
}

impl PolicyKind {
    pub fn label(self) -> &'static str {
        match self {
            PolicyKind::Wdmoe => "wdmoe",
            PolicyKind::VanillaTopK => "vanilla_topk",
            PolicyKind::LatencyGreedy => "latency_greedy",
        }
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum DropComparison {
    /// Drop when `kappa < theta`.
    #[default]
    StrictLess,
    /// Drop when `kappa <= theta`.
    LessOrEqual,
}

impl DropComparison {
    pub fn triggers(self, kappa: f64, threshold: f64) -> bool {
        match self {
            DropComparison::StrictLess => kappa < threshold,
            DropComparison::LessOrEqual => kappa <= threshold,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct PolicyConfig {
    pub top_k: usize,
    pub threshold: f64,
    pub max_drops: usize,
    pub drop_comparison: DropComparison,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self { top_k: 2, threshold: 0.2, max_drops: 1, drop_comparison: DropComparison::StrictLess }
    }
}

impl PolicyConfig {
    pub fn validate(&self, experts: usize) -> Result<(), PolicyError> {
        if self.top_k == 0 || self.top_k > experts {
            return Err(PolicyError::TopKOutOfRange { k: self.top_k, n: experts });
        }
        if self.max_drops > self.top_k - 1 {
            return Err(PolicyError::TooManyDrops { max_drops: self.max_drops, limit: self.top_k - 1 });
        }
        if !(self.threshold.is_finite() && self.threshold >= 0.0) {
            return Err(PolicyError::InvalidThreshold(self.threshold));
        }
        Ok(())
    }

    pub fn with_threshold(&self, threshold: f64) -> Self {
        Self { threshold, ..self.clone() }
    }
}

/// One evaluation of the decision variable and the drop it caused, if any.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct KappaStep {
    pub kappa: f64,
    pub dropped: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SelectionDecision {
    /// Surviving experts, in descending gate-weight order for top-k based
    /// policies and ascending delay order for `latency_greedy`.
    pub active_experts: Vec<usize>,
    /// Length `n`; exactly zero outside the active set.
    pub combination_weights: Vec<f64>,
    pub kappa_history: Vec<KappaStep>,
    pub policy: PolicyKind,
    /// Set when kappa was undefined (all-zero WLR) and the top-k was kept.
    pub degenerate: bool,
}

impl SelectionDecision {
    pub fn drops(&self) -> usize {
        self.kappa_history.iter().filter(|s| s.dropped.is_some()).count()
    }

    /// Same active experts with identical weights, ignoring policy label
    /// and kappa bookkeeping.
    pub fn same_selection(&self, other: &SelectionDecision) -> bool {
        self.active_experts == other.active_experts && self.combination_weights == other.combination_weights
    }
}

/// Element-wise `w / t`. Unreachable devices score 0.
pub fn compute_wlr(weights: &[f64], delays: &LatencyVector) -> Result<Vec<f64>, PolicyError> {
    let t = &delays.per_expert_delay_s;
    if weights.len() != t.len() {
        return Err(PolicyError::LengthMismatch { weights: weights.len(), delays: t.len() });
    }
    Ok(weights
        .iter()
        .zip(t)
        .map(|(&w, &d)| if is_unreachable(d) { 0.0 } else { w / d })
        .collect())
}

/// `min / (min + max)` over the given WLR entries.
pub fn kappa(wlr: &[f64]) -> Result<f64, PolicyError> {
    if let Some(&bad) = wlr.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
        return Err(PolicyError::InvalidWlr(bad));
    }
    let min = wlr.iter().copied().fold(f64::INFINITY, f64::min);
    let max = wlr.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if wlr.is_empty() || max == 0.0 {
        return Err(PolicyError::DegenerateWlr);
    }
    Ok(min / (min + max))
}

/// Indices ordered by `key` descending, ties to the lower index.
fn rank_descending(values: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    idx
}

/// Indices of the `k` largest weights, largest first.
pub fn select_topk(weights: &[f64], k: usize) -> Result<Vec<usize>, PolicyError> {
    if k == 0 || k > weights.len() {
        return Err(PolicyError::TopKOutOfRange { k, n: weights.len() });
    }
    let mut idx = rank_descending(weights);
    idx.truncate(k);
    Ok(idx)
}

/// Softmax over the logits of `active`, exact zeros elsewhere.
pub fn renormalize(logits: &[f64], active: &[usize]) -> Vec<f64> {
    let selected: Vec<f64> = active.iter().map(|&q| logits[q]).collect();
    let probs = softmax(&selected);
    let mut out = alloc::vec![0.0; logits.len()];
    for (&q, p) in active.iter().zip(probs) {
        out[q] = p;
    }
    out
}

fn check_inputs(gate: &GateOutput, delays: &LatencyVector, cfg: &PolicyConfig) -> Result<(), PolicyError> {
    if gate.weights.len() != delays.len() {
        return Err(PolicyError::LengthMismatch { weights: gate.weights.len(), delays: delays.len() });
    }
    cfg.validate(gate.weights.len())
}

/// Position (within `active`) of the smallest WLR, first occurrence on ties
/// after ordering by device index.
fn argmin_wlr(active: &[usize], wlr: &[f64]) -> usize {
    let mut best = 0;
    for pos in 1..active.len() {
        let (q, b) = (active[pos], active[best]);
        match wlr[q].total_cmp(&wlr[b]) {
            Ordering::Less => best = pos,
            Ordering::Equal if q < b => best = pos,
            _ => {}
        }
    }
    best
}

/// The WLR-threshold selection with iterative drops.
pub fn wdmoe_select(
    gate: &GateOutput,
    delays: &LatencyVector,
    cfg: &PolicyConfig,
) -> Result<SelectionDecision, PolicyError> {
    check_inputs(gate, delays, cfg)?;
    let wlr = compute_wlr(&gate.weights, delays)?;
    let mut active = select_topk(&gate.weights, cfg.top_k)?;
    let mut history = Vec::new();
    let mut degenerate = false;
    loop {
        let current: Vec<f64> = active.iter().map(|&q| wlr[q]).collect();
        let k = match kappa(&current) {
            Ok(k) => k,
            Err(PolicyError::DegenerateWlr) => {
                degenerate = true;
                break;
            }
            Err(e) => return Err(e),
        };
        let may_drop = history.len() < cfg.max_drops && active.len() > 1;
        if !(may_drop && cfg.drop_comparison.triggers(k, cfg.threshold)) {
            history.push(KappaStep { kappa: k, dropped: None });
            break;
        }
        let dropped = active.remove(argmin_wlr(&active, &wlr));
        history.push(KappaStep { kappa: k, dropped: Some(dropped) });
        // kappa is only re-evaluated while another drop is still allowed.
        if history.len() == cfg.max_drops || active.len() == 1 {
            break;
        }
    }
    Ok(SelectionDecision {
        combination_weights: renormalize(&gate.logits, &active),
        active_experts: active,
        kappa_history: history,
        policy: PolicyKind::Wdmoe,
        degenerate,
    })
}

/// Baselines: undisturbed top-k routing, or the `k` fastest experts.
pub fn baseline_select(
    gate: &GateOutput,
    delays: &LatencyVector,
    cfg: &PolicyConfig,
    kind: PolicyKind,
) -> Result<SelectionDecision, PolicyError> {
    check_inputs(gate, delays, cfg)?;
    let active = match kind {
        PolicyKind::VanillaTopK | PolicyKind::Wdmoe => select_topk(&gate.weights, cfg.top_k)?,
        PolicyKind::LatencyGreedy => {
            let t = &delays.per_expert_delay_s;
            let mut idx: Vec<usize> = (0..t.len()).collect();
            idx.sort_by(|&a, &b| t[a].total_cmp(&t[b]).then(a.cmp(&b)));
            idx.truncate(cfg.top_k);
            idx
        }
    };
    Ok(SelectionDecision {
        combination_weights: renormalize(&gate.logits, &active),
        active_experts: active,
        kappa_history: Vec::new(),
        policy: if kind == PolicyKind::Wdmoe { PolicyKind::VanillaTopK } else { kind },
        degenerate: false,
    })
}

/// Dispatches to [`wdmoe_select`] or [`baseline_select`].
pub fn select(
    gate: &GateOutput,
    delays: &LatencyVector,
    cfg: &PolicyConfig,
    kind: PolicyKind,
) -> Result<SelectionDecision, PolicyError> {
    match kind {
        PolicyKind::Wdmoe => wdmoe_select(gate, delays, cfg),
        other => baseline_select(gate, delays, cfg, other),
    }
}
