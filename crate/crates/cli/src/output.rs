//! Files written by `run` and `sweep`.
//!
//! * `summary.json` / `summary_theta_<t>.json`: scenario summaries
//! * `traces.jsonl`: one record per (policy, prompt, token, block) step
//! * `sweep.csv`: one row per threshold
//! * `manifest.json`: config digest, seed, tool version, timestamp, outputs

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use wdmoe_core::sim::{PolicySpec, PolicySummary, SweepRow};
use wdmoe_core::{PromptMetrics, ScenarioSummary, TokenTrace};

pub const SUMMARY_SCHEMA: &str = "wdmoe.summary.v1";
pub const SWEEP_SUMMARY_SCHEMA: &str = "wdmoe.sweep_summary.v1";
pub const MANIFEST_SCHEMA: &str = "wdmoe.manifest.v1";
pub const SWEEP_HEADER: &str = "theta,mean_latency_s,reduction_pct,mean_active_experts,mean_weight_fidelity";

pub const FIDELITY_NOTE: &str = "weight_fidelity is a performance proxy: combination-weight mass shared with the \
reference routing decision. It does not measure model accuracy.";

#[derive(Debug, Serialize, Deserialize)]
pub struct SummaryFile {
    pub schema: String,
    pub config_digest: String,
    pub master_seed: u64,
    pub note: String,
    pub summary: ScenarioSummary,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SweepSummaryFile {
    pub schema: String,
    pub config_digest: String,
    pub master_seed: u64,
    pub theta: f64,
    pub note: String,
    pub row: SweepRow,
    pub summary: PolicySummary,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema: String,
    pub command: String,
    pub config_digest: String,
    pub tool_version: String,
    pub master_seed: u64,
    pub timestamp_unix_s: u64,
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn new(command: &str, config_digest: String, master_seed: u64, outputs: &[PathBuf]) -> Self {
        Self {
            schema: MANIFEST_SCHEMA.to_string(),
            command: command.to_string(),
            config_digest,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            master_seed,
            timestamp_unix_s: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
            outputs: outputs.iter().map(|p| p.display().to_string()).collect(),
        }
    }
}

#[derive(Serialize)]
struct TraceRecord<'a> {
    policy: &'a str,
    threshold: f64,
    prompt_id: usize,
    #[serde(flatten)]
    trace: &'a TokenTrace,
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

/// Line-delimited trace sink.
pub struct TraceWriter {
    out: BufWriter<File>,
}

impl TraceWriter {
    pub fn create(path: &Path) -> anyhow::Result<Self> {
        Ok(Self { out: BufWriter::new(File::create(path)?) })
    }

    pub fn write_prompt(&mut self, spec: &PolicySpec, metrics: &PromptMetrics) -> anyhow::Result<()> {
        for trace in &metrics.traces {
            let rec = TraceRecord {
                policy: spec.kind.label(),
                threshold: spec.threshold,
                prompt_id: metrics.prompt_id,
                trace,
            };
            serde_json::to_writer(&mut self.out, &rec)?;
            self.out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn finish(mut self) -> anyhow::Result<()> {
        self.out.flush()?;
        Ok(())
    }
}

pub fn write_sweep_csv(path: &Path, rows: &[SweepRow]) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

/// `summary_theta_0.2.json` style name for a sweep point.
pub fn sweep_summary_name(theta: f64) -> String {
    format!("summary_theta_{theta}.json")
}

pub fn ensure_dir(dir: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(dir)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sweep_csv_header_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sweep.csv");
        let row = SweepRow {
            theta: 0.1,
            mean_latency_s: 2.5,
            reduction_pct: 10.0,
            mean_active_experts: 1.75,
            mean_weight_fidelity: 0.9,
        };
        write_sweep_csv(&path, &[row]).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some(SWEEP_HEADER));
        assert_eq!(lines.next(), Some("0.1,2.5,10.0,1.75,0.9"));
        assert_eq!(lines.next(), None);
    }

    #[test]
    fn sweep_names() {
        assert_eq!(sweep_summary_name(0.0), "summary_theta_0.json");
        assert_eq!(sweep_summary_name(0.25), "summary_theta_0.25.json");
    }
}
