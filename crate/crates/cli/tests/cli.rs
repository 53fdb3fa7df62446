use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use wdmoe_cli::config::{config_digest, parse_config};
use wdmoe_cli::output::SWEEP_HEADER;

const SMALL: &str = r#"
master_seed = 7
replications = 3
blocks = 4
prompt_length = { fixed = 5 }
baselines = ["vanilla_topk"]
"#;

fn wdmoe(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wdmoe"))
        .args(args)
        .env_remove("WDMOE_SEED")
        .env_remove("WDMOE_OUT_DIR")
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn bundled() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/default.toml")
}

#[test]
fn run_writes_schema_valid_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", SMALL);
    let out = dir.path().join("out");
    let o = wdmoe(&["run", s(&cfg), "--out", s(&out), "--trace"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    let summary: Value = serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["schema"], "wdmoe.summary.v1");
    assert_eq!(summary["master_seed"], 7);
    let policies = summary["summary"]["policies"].as_array().unwrap();
    assert_eq!(policies.len(), 2);
    assert_eq!(policies[0]["policy"]["kind"], "wdmoe");
    assert_eq!(policies[1]["policy"]["kind"], "vanilla_topk");
    for key in [
        "mean_latency_s",
        "median_latency_s",
        "p95_latency_s",
        "mean_drops_per_token",
        "mean_active_experts",
        "mean_weight_fidelity",
    ] {
        assert!(policies[0][key].as_f64().unwrap() >= 0.0, "{key}");
    }
    assert!(policies[0]["mean_latency_s"].as_f64().unwrap() > 0.0);
    assert_eq!(policies[0]["prompt_latencies_s"].as_array().unwrap().len(), 3);

    let manifest: Value = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["schema"], "wdmoe.manifest.v1");
    assert_eq!(manifest["config_digest"], summary["config_digest"]);
    assert_eq!(manifest["config_digest"].as_str().unwrap().len(), 64);
    assert!(manifest["timestamp_unix_s"].as_u64().is_some());
    assert_eq!(manifest["outputs"].as_array().unwrap().len(), 2);

    // 2 policies x 3 prompts x 5 tokens x 4 blocks
    let traces = fs::read_to_string(out.join("traces.jsonl")).unwrap();
    assert_eq!(traces.lines().count(), 2 * 3 * 5 * 4);
    let first: Value = serde_json::from_str(traces.lines().next().unwrap()).unwrap();
    for key in ["policy", "threshold", "prompt_id", "token_id", "block_id", "gate_weights", "delays", "decision", "token_latency_s"] {
        assert!(!first[key].is_null(), "{key}");
    }
}

#[test]
fn run_is_byte_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", SMALL);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert!(wdmoe(&["run", s(&cfg), "--out", s(&a)]).status.success());
    assert!(wdmoe(&["run", s(&cfg), "--out", s(&b)]).status.success());
    assert_eq!(fs::read(a.join("summary.json")).unwrap(), fs::read(b.join("summary.json")).unwrap());
}

#[test]
fn seed_flag_beats_env() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", SMALL);
    let out = dir.path().join("o");
    let o = Command::new(env!("CARGO_BIN_EXE_wdmoe"))
        .args(["run", s(&cfg), "--seed", "11"])
        .env("WDMOE_SEED", "99")
        .env("WDMOE_OUT_DIR", &out)
        .output()
        .unwrap();
    assert!(o.status.success());
    let summary: Value = serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["master_seed"], 11);

    let out2 = dir.path().join("o2");
    let o = Command::new(env!("CARGO_BIN_EXE_wdmoe"))
        .args(["run", s(&cfg), "--out", s(&out2)])
        .env("WDMOE_SEED", "99")
        .output()
        .unwrap();
    assert!(o.status.success());
    let summary: Value = serde_json::from_str(&fs::read_to_string(out2.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["master_seed"], 99);
}

#[test]
fn malformed_config_exits_1_without_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "bad.toml", "blocks = \"many\"\n");
    let out = dir.path().join("out");
    let o = wdmoe(&["run", s(&cfg), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(!out.exists());

    let o = wdmoe(&["sweep", s(&cfg), "--thetas", "0,0.1", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(!out.exists());
}

#[test]
fn validate_bundled_config_round_trips() {
    let o = wdmoe(&["validate", s(&bundled())]);
    assert!(o.status.success());
    let dump = String::from_utf8(o.stdout).unwrap();
    let original = parse_config(&fs::read_to_string(bundled()).unwrap()).unwrap();
    let reparsed = parse_config(&dump).unwrap();
    assert_eq!(config_digest(&reparsed), config_digest(&original));
    assert!(dump.contains(&config_digest(&original)));
}

#[test]
fn validate_names_the_broken_field() {
    let dir = tempfile::tempdir().unwrap();
    let over = write_config(
        dir.path(),
        "bw.toml",
        "[devices]\ncount = 2\nbandwidth = { shares_hz = [60e6, 60e6] }\ndistance = { explicit = [10.0, 20.0] }\n",
    );
    let o = wdmoe(&["validate", s(&over)]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("devices.bandwidth.shares_hz") && err.contains("exceeds"), "{err}");

    let k = write_config(dir.path(), "k.toml", "[devices]\ncount = 2\n[policy]\ntop_k = 3\n");
    let o = wdmoe(&["validate", s(&k)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("policy.top_k"));

    let missing = wdmoe(&["validate", s(&dir.path().join("nope.toml"))]);
    assert_eq!(missing.status.code(), Some(1));
}

fn read_sweep(out: &Path) -> Vec<Vec<f64>> {
    let text = fs::read_to_string(out.join("sweep.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some(SWEEP_HEADER));
    lines.map(|l| l.split(',').map(|v| v.parse().unwrap()).collect()).collect()
}

#[test]
fn sweep_sorts_and_reports_reduction() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", SMALL);
    let out = dir.path().join("sw");
    let o = wdmoe(&["sweep", s(&cfg), "--thetas", "0.3,0.2,0.1,0", "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = read_sweep(&out);
    assert_eq!(rows.len(), 4);
    assert!(rows.iter().all(|r| r.len() == 5));
    assert_eq!(rows.iter().map(|r| r[0]).collect::<Vec<_>>(), vec![0.0, 0.1, 0.2, 0.3]);
    assert_eq!(rows[0][2], 0.0);
    for t in ["0", "0.1", "0.2", "0.3"] {
        let p = out.join(format!("summary_theta_{t}.json"));
        let v: Value = serde_json::from_str(&fs::read_to_string(&p).unwrap()).unwrap();
        assert_eq!(v["schema"], "wdmoe.sweep_summary.v1");
    }

    let single = dir.path().join("single");
    assert!(wdmoe(&["sweep", s(&cfg), "--thetas", "0", "--out", s(&single)]).status.success());
    let rows = read_sweep(&single);
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0][2], 0.0);
}

#[test]
fn sweep_rejects_negative_threshold() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", SMALL);
    let out = dir.path().join("neg");
    let o = wdmoe(&["sweep", s(&cfg), "--thetas=0,-0.1", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(!out.exists());
}
