//! Latency model, expert selection policies and a deterministic simulator
//! for mixture-of-experts inference split across a base station (attention
//! and gating) and wireless devices (one expert each).
//!
//! The crate is `no_std` and only needs `alloc`. Randomness always comes
//! from an explicitly seeded [`SimRng`].

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod channel;
pub mod compute_model;
pub mod moe_core;
pub mod policy;
pub mod sim;

use rand::SeedableRng;

pub use channel::{CarrierConfig, ChannelRealization, LinkBudget};
pub use compute_model::{DeviceProfile, ExpertCost, LatencyVector};
pub use moe_core::{GateOutput, MoeBlockParams, Token};
pub use policy::{PolicyConfig, PolicyKind, SelectionDecision};
pub use sim::{PromptMetrics, Scenario, ScenarioConfig, ScenarioSummary, SimError, SweepTable, TokenTrace};

pub type SimRng = rand_chacha::ChaCha8Rng;

pub fn seeded_rng(seed: u64) -> SimRng {
    SimRng::seed_from_u64(seed)
}

/// Random-stream tags mixed into [`derive_seed`].
pub mod streams {
    pub const DEVICES: u64 = 1;
    pub const MODEL: u64 = 2;
    pub const PROMPT: u64 = 3;
    pub const PROMPT_LEN: u64 = 4;
    pub const TOKENS: u64 = 5;
    pub const CHANNEL: u64 = 6;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Child seed for `(stream, a, b)` under `parent`.
pub fn derive_seed(parent: u64, stream: u64, a: u64, b: u64) -> u64 {
    let mut h = splitmix64(parent);
    for word in [stream, a, b] {
        h = splitmix64(h ^ word);
    }
    h
}
