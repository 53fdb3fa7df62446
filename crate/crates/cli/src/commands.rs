use std::path::{Path, PathBuf};

use thiserror::Error;
use wdmoe_core::{Scenario, ScenarioConfig};

use crate::config::{config_digest, effective_config_toml, load_config, LoadError};
use crate::output::{
    ensure_dir, sweep_summary_name, write_json, write_sweep_csv, RunManifest, SummaryFile, SweepSummaryFile,
    TraceWriter, FIDELITY_NOTE, SUMMARY_SCHEMA, SWEEP_SUMMARY_SCHEMA,
};

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad config or arguments; nothing was written.
    #[error("{0}")]
    Invalid(String),
    #[error("{0:#}")]
    Runtime(anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Invalid(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

impl From<LoadError> for CliError {
    fn from(e: LoadError) -> Self {
        CliError::Invalid(e.to_string())
    }
}

fn runtime<E: Into<anyhow::Error>>(e: E) -> CliError {
    CliError::Runtime(e.into())
}

fn prepare(config_path: &Path, seed: Option<u64>) -> Result<Scenario, CliError> {
    let mut config = load_config(config_path)?;
    if let Some(seed) = seed {
        config.master_seed = seed;
    }
    Scenario::new(config).map_err(|e| CliError::Invalid(format!("invalid config: {e}")))
}

/// Runs the scenario and writes `summary.json`, optionally `traces.jsonl`,
/// and `manifest.json` into `out_dir`. Returns the written paths.
pub fn cmd_run(config_path: &Path, seed: Option<u64>, out_dir: &Path, trace: bool) -> Result<Vec<PathBuf>, CliError> {
    let scenario = prepare(config_path, seed)?;
    let digest = config_digest(&scenario.config);
    ensure_dir(out_dir).map_err(runtime)?;

    let mut outputs = Vec::new();
    let mut writer = None;
    if trace {
        let path = out_dir.join("traces.jsonl");
        writer = Some(TraceWriter::create(&path).map_err(runtime)?);
        outputs.push(path);
    }
    let mut sink_error = None;
    let summary = scenario
        .run_with(|spec, metrics| {
            if let (Some(w), None) = (writer.as_mut(), sink_error.as_ref()) {
                if let Err(e) = w.write_prompt(spec, metrics) {
                    sink_error = Some(e);
                }
            }
        })
        .map_err(runtime)?;
    if let Some(e) = sink_error {
        return Err(runtime(e.context("writing traces")));
    }
    if let Some(w) = writer {
        w.finish().map_err(runtime)?;
    }

    let summary_path = out_dir.join("summary.json");
    let file = SummaryFile {
        schema: SUMMARY_SCHEMA.to_string(),
        config_digest: digest.clone(),
        master_seed: scenario.config.master_seed,
        note: FIDELITY_NOTE.to_string(),
        summary,
    };
    write_json(&summary_path, &file).map_err(runtime)?;
    outputs.insert(0, summary_path);

    let manifest_path = out_dir.join("manifest.json");
    let manifest = RunManifest::new("run", digest, scenario.config.master_seed, &outputs);
    write_json(&manifest_path, &manifest).map_err(runtime)?;
    outputs.push(manifest_path);
    Ok(outputs)
}

/// Threshold sweep of the configured policy settings; writes `sweep.csv`,
/// one summary per threshold and `manifest.json`.
pub fn cmd_sweep(config_path: &Path, thetas: &[f64], seed: Option<u64>, out_dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    if thetas.is_empty() {
        return Err(CliError::Invalid("--thetas: at least one threshold is required".into()));
    }
    if let Some(bad) = thetas.iter().find(|t| !(t.is_finite() && **t >= 0.0)) {
        return Err(CliError::Invalid(format!("--thetas: thresholds must be finite and >= 0, got {bad}")));
    }
    let scenario = prepare(config_path, seed)?;
    let digest = config_digest(&scenario.config);
    let table = scenario.threshold_sweep(thetas).map_err(runtime)?;

    ensure_dir(out_dir).map_err(runtime)?;
    let mut outputs = Vec::new();
    let csv_path = out_dir.join("sweep.csv");
    write_sweep_csv(&csv_path, &table.rows).map_err(runtime)?;
    outputs.push(csv_path);
    for (row, summary) in table.rows.iter().zip(&table.summaries) {
        let path = out_dir.join(sweep_summary_name(row.theta));
        let file = SweepSummaryFile {
            schema: SWEEP_SUMMARY_SCHEMA.to_string(),
            config_digest: digest.clone(),
            master_seed: scenario.config.master_seed,
            theta: row.theta,
            note: FIDELITY_NOTE.to_string(),
            row: *row,
            summary: summary.clone(),
        };
        write_json(&path, &file).map_err(runtime)?;
        outputs.push(path);
    }
    let manifest_path = out_dir.join("manifest.json");
    write_json(&manifest_path, &RunManifest::new("sweep", digest, scenario.config.master_seed, &outputs))
        .map_err(runtime)?;
    outputs.push(manifest_path);
    Ok(outputs)
}

/// Validates without running and returns the effective config dump,
/// prefixed with its digest as a TOML comment.
pub fn cmd_validate(config_path: &Path) -> Result<String, CliError> {
    let config: ScenarioConfig = load_config(config_path)?;
    Scenario::new(config.clone()).map_err(|e| CliError::Invalid(format!("invalid config: {e}")))?;
    let dump = effective_config_toml(&config);
    Ok(format!("# config_digest = \"{}\"\n{dump}", config_digest(&config)))
}
