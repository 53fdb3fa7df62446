//! A small numerically real MoE block: gating softmax, two-layer expert
//! MLPs and the weighted combination of expert outputs.
//!
//! The block stands in for one transformer MoE layer. A dense `pre_mix`
//! layer followed by RMS normalization replaces the attention sublayer so
//! that multi-block traces stay well scaled.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use thiserror::Error;

use crate::policy::SelectionDecision;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MoeError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("decision gives weight {weight} to inactive expert {expert}")]
    InactiveWeight { expert: usize, weight: f64 },
    #[error("decision references expert {expert} but the block has {experts}")]
    UnknownExpert { expert: usize, experts: usize },
    #[error("negative combination weight {weight} for expert {expert}")]
    NegativeWeight { expert: usize, weight: f64 },
}

fn check_len(expected: usize, got: usize) -> Result<(), MoeError> {
    if expected == got {
        Ok(())
    } else {
        Err(MoeError::Dimension { expected, got })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Activation {
    /// `x * sigmoid(x)`
    #[default]
    Silu,
    Relu,
    /// Pass-through; only useful for analytic tests.
    Identity,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Silu => x / (1.0 + libm::exp(-x)),
            Activation::Relu => x.max(0.0),
            Activation::Identity => x,
        }
    }
}

/// Token embedding entering an MoE block.
#[derive(Debug, Clone, PartialEq)]
pub struct Token {
    pub embedding: Vec<f64>,
}

impl Token {
    pub fn new(embedding: Vec<f64>) -> Self {
        Self { embedding }
    }

    pub fn dim(&self) -> usize {
        self.embedding.len()
    }
}

/// Affine map `y = W x + b`, `W` stored row-major as `out_dim x in_dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Self { in_dim, out_dim, weights: vec![0.0; in_dim * out_dim], bias: vec![0.0; out_dim] }
    }

    pub fn identity(dim: usize) -> Self {
        let mut d = Self::zeros(dim, dim);
        for i in 0..dim {
            d.weights[i * dim + i] = 1.0;
        }
        d
    }

    /// Weights and biases uniform in `[-1/sqrt(in_dim), 1/sqrt(in_dim)]`.
    pub fn random<R: Rng + ?Sized>(in_dim: usize, out_dim: usize, rng: &mut R) -> Self {
        let bound = 1.0 / libm::sqrt(in_dim as f64);
        let mut draw = || (2.0 * rng.random::<f64>() - 1.0) * bound;
        let weights = (0..in_dim * out_dim).map(|_| draw()).collect();
        let bias = (0..out_dim).map(|_| draw()).collect();
        Self { in_dim, out_dim, weights, bias }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.weights[i * self.in_dim..(i + 1) * self.in_dim]
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>, MoeError> {
        check_len(self.in_dim, x.len())?;
        Ok((0..self.out_dim)
            .map(|i| self.row(i).iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.bias[i])
            .collect())
    }
}

/// Two-layer feed-forward expert `down(act(up(x)))`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpertParams {
    pub up: Dense,
    pub down: Dense,
    pub activation: Activation,
}

impl ExpertParams {
    pub fn random<R: Rng + ?Sized>(dim: usize, hidden: usize, activation: Activation, rng: &mut R) -> Self {
        Self { up: Dense::random(dim, hidden, rng), down: Dense::random(hidden, dim, rng), activation }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MoeBlockParams {
    pub gate: Dense,
    pub experts: Vec<ExpertParams>,
    pub pre_mix: Dense,
}

impl MoeBlockParams {
    pub fn random<R: Rng + ?Sized>(
        dim: usize,
        hidden: usize,
        experts: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Self {
        let pre_mix = Dense::random(dim, dim, rng);
        let gate = Dense::random(dim, experts, rng);
        let experts = (0..experts).map(|_| ExpertParams::random(dim, hidden, activation, rng)).collect();
        Self { gate, experts, pre_mix }
    }

    pub fn num_experts(&self) -> usize {
        self.experts.len()
    }

    pub fn dim(&self) -> usize {
        self.pre_mix.in_dim
    }

    /// Pre-mix layer followed by RMS normalization.
    pub fn mix(&self, token: &Token) -> Result<Token, MoeError> {
        let mut h = self.pre_mix.forward(&token.embedding)?;
        let ms = h.iter().map(|v| v * v).sum::<f64>() / h.len() as f64;
        let scale = 1.0 / libm::sqrt(ms + 1e-12);
        h.iter_mut().for_each(|v| *v *= scale);
        Ok(Token::new(h))
    }
}

/// Gate logits and their full softmax.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GateOutput {
    pub logits: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GateOutput {
    pub fn from_logits(logits: Vec<f64>) -> Self {
        let weights = softmax(&logits);
        Self { logits, weights }
    }

    pub fn num_experts(&self) -> usize {
        self.logits.len()
    }
}

/// Max-shifted softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| libm::exp(l - max)).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

pub fn gate_forward(token: &Token, block: &MoeBlockParams) -> Result<GateOutput, MoeError> {
    Ok(GateOutput::from_logits(block.gate.forward(&token.embedding)?))
}

pub fn expert_forward(token: &Token, expert: &ExpertParams) -> Result<Vec<f64>, MoeError> {
    let mut hidden = expert.up.forward(&token.embedding)?;
    hidden.iter_mut().for_each(|v| *v = expert.activation.apply(*v));
    expert.down.forward(&hidden)
}

/// `sum_q w_q y_q`; zero-weight experts are skipped.
pub fn moe_combine(weights: &[f64], expert_outputs: &[Vec<f64>]) -> Result<Vec<f64>, MoeError> {
    check_len(weights.len(), expert_outputs.len())?;
    let dim = expert_outputs.first().map_or(0, Vec::len);
    let mut out = vec![0.0; dim];
    for (q, (&w, y)) in weights.iter().zip(expert_outputs).enumerate() {
        check_len(dim, y.len())?;
        if w < 0.0 {
            return Err(MoeError::NegativeWeight { expert: q, weight: w });
        }
        if w == 0.0 {
            continue;
        }
        out.iter_mut().zip(y).for_each(|(o, v)| *o += w * v);
    }
    Ok(out)
}

/// Result of pushing one token through a block under a selection decision.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockOutput {
    pub token: Token,
    pub gate: GateOutput,
    /// Experts actually evaluated, ascending.
    pub evaluated: Vec<usize>,
}

fn check_decision(block: &MoeBlockParams, decision: &SelectionDecision) -> Result<(), MoeError> {
    let n = block.num_experts();
    check_len(n, decision.combination_weights.len())?;
    if let Some(&expert) = decision.active_experts.iter().find(|&&q| q >= n) {
        return Err(MoeError::UnknownExpert { expert, experts: n });
    }
    for (q, &w) in decision.combination_weights.iter().enumerate() {
        if w != 0.0 && !decision.active_experts.contains(&q) {
            return Err(MoeError::InactiveWeight { expert: q, weight: w });
        }
    }
    Ok(())
}

/// Evaluates only the decision's active experts on an already mixed token
/// and combines them with the decision weights.
pub fn evaluate_active(
    mixed: &Token,
    block: &MoeBlockParams,
    decision: &SelectionDecision,
) -> Result<(Vec<f64>, Vec<usize>), MoeError> {
    check_decision(block, decision)?;
    let mut evaluated = decision.active_experts.clone();
    evaluated.sort_unstable();
    evaluated.dedup();
    let mut out = vec![0.0; block.dim()];
    for &q in &evaluated {
        let y = expert_forward(mixed, &block.experts[q])?;
        let w = decision.combination_weights[q];
        out.iter_mut().zip(&y).for_each(|(o, v)| *o += w * v);
    }
    Ok((out, evaluated))
}

pub fn block_forward(
    token: &Token,
    block: &MoeBlockParams,
    decision: &SelectionDecision,
) -> Result<BlockOutput, MoeError> {
    let mixed = block.mix(token)?;
    let gate = gate_forward(&mixed, block)?;
    let (embedding, evaluated) = evaluate_active(&mixed, block, decision)?;
    Ok(BlockOutput { token: Token::new(embedding), gate, evaluated })
}
