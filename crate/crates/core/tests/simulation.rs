mod common;

use wdmoe_core::moe_core::{expert_forward, gate_forward, Activation, MoeBlockParams, Token};
use wdmoe_core::policy::PolicyKind;
use wdmoe_core::sim::{run_scenario, PromptLength, SummaryAccumulator};
use wdmoe_core::{seeded_rng, Scenario, ScenarioConfig};

use common::{gate_by_hand, mix_by_hand};

fn small(replications: usize) -> ScenarioConfig {
    ScenarioConfig {
        replications,
        blocks: 6,
        prompt_length: PromptLength::Fixed(8),
        baselines: vec![],
        ..ScenarioConfig::default()
    }
}

#[test]
fn gate_and_expert_match_hand_algebra() {
    let block = MoeBlockParams::random(12, 20, 8, Activation::Silu, &mut seeded_rng(77));
    let token = Token::new((0..12).map(|i| (i as f64 * 0.37).sin()).collect());
    let mixed = block.mix(&token).unwrap();
    let hand_mixed = mix_by_hand(&block, &token.embedding);
    for (a, b) in mixed.embedding.iter().zip(&hand_mixed) {
        assert!((a - b).abs() < 1e-12);
    }
    let g = gate_forward(&mixed, &block).unwrap();
    for (a, b) in g.weights.iter().zip(gate_by_hand(&block, &mixed.embedding)) {
        assert!((a - b).abs() < 1e-12);
    }
    // One-hot dense evaluation isolates a single expert.
    for q in 0..8 {
        let mut w = vec![0.0; 8];
        w[q] = 1.0;
        let y = expert_forward(&mixed, &block.experts[q]).unwrap();
        let hand = common::dense_block_by_hand(&block, &token.embedding, &w);
        for (a, b) in y.iter().zip(&hand) {
            assert!((a - b).abs() < 1e-6);
        }
    }
}

#[test]
fn zero_threshold_matches_vanilla_seed_for_seed() {
    let s = Scenario::new(small(10)).unwrap();
    let wd = s.config.policy.with_threshold(0.0);
    let va = wd.with_kind(PolicyKind::VanillaTopK);
    for prompt in 0..10 {
        let a = s.run_prompt(&wd, prompt).unwrap();
        let b = s.run_prompt(&va, prompt).unwrap();
        assert_eq!(a.prompt_latency_s, b.prompt_latency_s);
        for (x, y) in a.traces.iter().zip(&b.traces) {
            assert!(x.decision.same_selection(&y.decision));
        }
    }
}

#[test]
fn paired_latency_non_increasing_in_threshold() {
    let s = Scenario::new(small(20)).unwrap();
    let thetas = [0.0, 0.1, 0.2, 0.3, 0.5];
    for prompt in 0..20 {
        let lat: Vec<f64> = thetas
            .iter()
            .map(|&t| s.run_prompt(&s.config.policy.with_threshold(t), prompt).unwrap().prompt_latency_s)
            .collect();
        assert!(lat.windows(2).all(|w| w[1] <= w[0]), "prompt {prompt}: {lat:?}");
    }
}

#[test]
fn coupling_holds_across_thresholds() {
    let s = Scenario::new(small(2)).unwrap();
    let a = s.run_prompt(&s.config.policy.with_threshold(0.0), 1).unwrap();
    let b = s.run_prompt(&s.config.policy.with_threshold(0.5), 1).unwrap();
    for (x, y) in a.traces.iter().zip(&b.traces) {
        assert_eq!(x.delays, y.delays);
        assert_eq!(x.gate_weights, y.gate_weights);
    }
}

#[test]
fn summary_is_aggregation_of_prompts() {
    let s = Scenario::new(small(2)).unwrap();
    let summary = s.run().unwrap();
    let p0 = s.run_prompt(&s.config.policy, 0).unwrap();
    let p1 = s.run_prompt(&s.config.policy, 1).unwrap();
    let primary = summary.primary();
    assert_eq!(primary.prompt_latencies_s, vec![p0.prompt_latency_s, p1.prompt_latency_s]);
    assert_eq!(primary.mean_latency_s, (p0.prompt_latency_s + p1.prompt_latency_s) / 2.0);
    assert_eq!(primary.steps, p0.steps() + p1.steps());
    assert_eq!(
        primary.mean_drops_per_token,
        (p0.drop_count + p1.drop_count) as f64 / (p0.steps() + p1.steps()) as f64
    );
    let mut acc = SummaryAccumulator::new(s.config.policy.clone());
    acc.push(&p0);
    acc.push(&p1);
    assert_eq!(&acc.finish(), primary);
    assert_eq!(run_scenario(&s.config).unwrap(), summary);
}

#[test]
fn baselines_are_reported() {
    let mut c = small(3);
    c.baselines = vec![PolicyKind::VanillaTopK, PolicyKind::LatencyGreedy];
    c.policy.threshold = 0.0;
    let summary = run_scenario(&c).unwrap();
    assert_eq!(summary.policies.len(), 3);
    assert_eq!(summary.policies[1].policy.kind, PolicyKind::VanillaTopK);
    assert_eq!(summary.policies[0].prompt_latencies_s, summary.policies[1].prompt_latencies_s);
    assert_eq!(summary.latency_ratio_vs_primary[1], 1.0);
    // The k fastest experts bound any other k-subset from below.
    let greedy = &summary.policies[2];
    for (g, v) in greedy.prompt_latencies_s.iter().zip(&summary.policies[1].prompt_latencies_s) {
        assert!(g <= v);
    }
}

#[test]
fn sweep_shape() {
    let s = Scenario::new(small(6)).unwrap();
    let only_zero = s.threshold_sweep(&[0.0]).unwrap();
    assert_eq!(only_zero.rows.len(), 1);
    assert_eq!(only_zero.rows[0].reduction_pct, 0.0);
    assert_eq!(only_zero.rows[0].mean_weight_fidelity, 1.0);

    let t = s.threshold_sweep(&[0.5, 0.2, 0.0, 0.3, 0.1, 0.2]).unwrap();
    let thetas: Vec<f64> = t.rows.iter().map(|r| r.theta).collect();
    assert_eq!(thetas, vec![0.0, 0.1, 0.2, 0.3, 0.5]);
    for w in t.rows.windows(2) {
        assert!(w[1].mean_active_experts <= w[0].mean_active_experts);
        assert!(w[1].reduction_pct >= w[0].reduction_pct);
        assert!(w[1].mean_weight_fidelity <= w[0].mean_weight_fidelity + 1e-12);
    }
    assert_eq!(t.baseline.mean_latency_s, t.rows[0].mean_latency_s);
}

#[test]
fn scenario_runs_are_deterministic() {
    let mut c = small(3);
    c.prompt_length = PromptLength::Range { min: 3, max: 9 };
    let a = run_scenario(&c).unwrap();
    let b = run_scenario(&c).unwrap();
    assert_eq!(a, b);
    c.master_seed += 1;
    assert_ne!(run_scenario(&c).unwrap(), a);
}
