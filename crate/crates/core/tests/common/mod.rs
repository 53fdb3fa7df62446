//! Reference implementations written independently of the library code
//! paths they check. Shared with the CLI crate's acceptance suite.

#![allow(dead_code)]

use wdmoe_core::moe_core::{Activation, MoeBlockParams};

/// Result of running the expert selection procedure by hand.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleDecision {
    pub active: Vec<usize>,
    pub weights: Vec<f64>,
}

/// Straight-line executor of the selection procedure:
/// 1. WLR over all experts (unreachable -> 0)
/// 2. top-k by gate weight via repeated max extraction
/// 3. while drops remain: kappa = min/(min+max) over survivors; drop the
///    minimal-WLR survivor if kappa is below theta
/// 4. softmax of surviving logits
pub fn select_by_hand(
    logits: &[f64],
    delays: &[f64],
    top_k: usize,
    theta: f64,
    max_drops: usize,
    strict: bool,
) -> OracleDecision {
    let n = logits.len();
    let zmax = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = logits.iter().map(|l| (l - zmax).exp()).sum();
    let weights: Vec<f64> = logits.iter().map(|l| (l - zmax).exp() / z).collect();

    let mut wlr = vec![0.0; n];
    for q in 0..n {
        wlr[q] = if delays[q].is_infinite() { 0.0 } else { weights[q] / delays[q] };
    }

    let mut taken = vec![false; n];
    let mut active = Vec::new();
    for _ in 0..top_k {
        let mut best: Option<usize> = None;
        for q in 0..n {
            if taken[q] {
                continue;
            }
            best = match best {
                None => Some(q),
                Some(b) if weights[q] > weights[b] => Some(q),
                keep => keep,
            };
        }
        let b = best.unwrap();
        taken[b] = true;
        active.push(b);
    }

    let mut drops = 0;
    while drops < max_drops && active.len() > 1 {
        let lo = active.iter().map(|&q| wlr[q]).fold(f64::INFINITY, f64::min);
        let hi = active.iter().map(|&q| wlr[q]).fold(0.0, f64::max);
        if hi == 0.0 {
            break;
        }
        let kappa = lo / (lo + hi);
        let fire = if strict { kappa < theta } else { kappa <= theta };
        if !fire {
            break;
        }
        let victim = (0..n).find(|q| active.contains(q) && wlr[*q] == lo).unwrap();
        active.retain(|&q| q != victim);
        drops += 1;
    }

    let smax = active.iter().map(|&q| logits[q]).fold(f64::NEG_INFINITY, f64::max);
    let denom: f64 = active.iter().map(|&q| (logits[q] - smax).exp()).sum();
    let mut out = vec![0.0; n];
    for &q in &active {
        out[q] = (logits[q] - smax).exp() / denom;
    }
    OracleDecision { active, weights: out }
}

fn act(kind: Activation, x: f64) -> f64 {
    match kind {
        Activation::Silu => x * (1.0 / (1.0 + (-x).exp())),
        Activation::Relu => {
            if x > 0.0 {
                x
            } else {
                0.0
            }
        }
        Activation::Identity => x,
    }
}

fn matvec(w: &[f64], b: &[f64], rows: usize, cols: usize, x: &[f64]) -> Vec<f64> {
    let mut y = b.to_vec();
    for r in 0..rows {
        for c in 0..cols {
            y[r] += w[r * cols + c] * x[c];
        }
    }
    y
}

/// Pre-mix + RMS normalization, computed with explicit loops.
pub fn mix_by_hand(block: &MoeBlockParams, x: &[f64]) -> Vec<f64> {
    let m = block.pre_mix.in_dim;
    let h = matvec(&block.pre_mix.weights, &block.pre_mix.bias, m, m, x);
    let rms = (h.iter().map(|v| v * v).sum::<f64>() / m as f64 + 1e-12).sqrt();
    h.iter().map(|v| v / rms).collect()
}

/// Evaluates every expert on the mixed token and sums `w_q y_q` over all q.
pub fn dense_block_by_hand(block: &MoeBlockParams, x: &[f64], weights: &[f64]) -> Vec<f64> {
    let h = mix_by_hand(block, x);
    let m = h.len();
    let mut out = vec![0.0; m];
    for (q, e) in block.experts.iter().enumerate() {
        let hidden_dim = e.up.out_dim;
        let a: Vec<f64> = matvec(&e.up.weights, &e.up.bias, hidden_dim, m, &h)
            .into_iter()
            .map(|v| act(e.activation, v))
            .collect();
        let y = matvec(&e.down.weights, &e.down.bias, m, hidden_dim, &a);
        for i in 0..m {
            out[i] += weights[q] * y[i];
        }
    }
    out
}

/// Gate softmax computed with explicit loops.
pub fn gate_by_hand(block: &MoeBlockParams, mixed: &[f64]) -> Vec<f64> {
    let n = block.gate.out_dim;
    let logits = matvec(&block.gate.weights, &block.gate.bias, n, block.gate.in_dim, mixed);
    let e: Vec<f64> = logits.iter().map(|l| l.exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}
