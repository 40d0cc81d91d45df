//! Metrics and manifest persistence. Files are written to a `.partial` path
//! first and renamed into place, so a crash never leaves an unmarked
//! half-written file.

use crate::config::ExperimentConfig;
use fedrobust::sim::{RoundTranscript, TrainResult};
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::Path;

pub fn write_atomic(path: &Path, contents: &str) -> Result<(), String> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| format!("{}: {e}", parent.display()))?;
    }
    let partial = path.with_extension(format!(
        "{}.partial",
        path.extension().and_then(|e| e.to_str()).unwrap_or("out")
    ));
    fs::write(&partial, contents).map_err(|e| format!("{}: {e}", partial.display()))?;
    fs::rename(&partial, path).map_err(|e| format!("{}: {e}", path.display()))?;
    Ok(())
}

pub const METRICS_HEADER: &str =
    "round,train_loss,eval_accuracy,uplink_floats_per_user,cumulative_epsilon";

fn field(v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{x}"),
        None => String::new(),
    }
}

/// One CSV row per evaluated round (the eval cadence plus the final round).
pub fn metrics_csv(transcripts: &[RoundTranscript]) -> String {
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for t in transcripts {
        if t.train_loss.is_none() {
            continue;
        }
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            t.round,
            field(t.train_loss),
            field(t.eval_accuracy),
            t.uplink_floats_per_user,
            field(t.cumulative_epsilon),
        ));
    }
    out
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsRow {
    pub round: usize,
    pub train_loss: Option<f64>,
    pub eval_accuracy: Option<f64>,
    pub uplink_floats_per_user: usize,
    pub cumulative_epsilon: Option<f64>,
}

/// Parses a metrics file back; the writer and reader round-trip losslessly.
pub fn parse_metrics_csv(text: &str) -> Result<Vec<MetricsRow>, String> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == METRICS_HEADER => {}
        other => return Err(format!("bad metrics header: {other:?}")),
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 5 {
            return Err(format!("line {}: expected 5 fields", i + 2));
        }
        let opt = |s: &str| -> Result<Option<f64>, String> {
            if s.is_empty() {
                Ok(None)
            } else {
                s.parse().map(Some).map_err(|e| format!("line {}: {e}", i + 2))
            }
        };
        rows.push(MetricsRow {
            round: parts[0].parse().map_err(|e| format!("line {}: {e}", i + 2))?,
            train_loss: opt(parts[1])?,
            eval_accuracy: opt(parts[2])?,
            uplink_floats_per_user: parts[3]
                .parse()
                .map_err(|e| format!("line {}: {e}", i + 2))?,
            cumulative_epsilon: opt(parts[4])?,
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub config: ExperimentConfig,
    pub compressed_dim: usize,
    pub final_train_loss: Option<f64>,
    pub final_eval_accuracy: Option<f64>,
    /// Composed (epsilon, delta = 1e-5) at the end of training; None when DP
    /// is disabled.
    pub final_epsilon: Option<f64>,
    pub warnings: Vec<String>,
    pub notes: Vec<String>,
    pub wall_clock_secs: f64,
}

pub fn build_manifest(
    config: &ExperimentConfig,
    result: &TrainResult,
    compressed_dim: usize,
    wall_clock_secs: f64,
    notes: Vec<String>,
) -> Manifest {
    let last = result.transcripts.last();
    Manifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        config: config.clone(),
        compressed_dim,
        final_train_loss: last.and_then(|t| t.train_loss),
        final_eval_accuracy: last.and_then(|t| t.eval_accuracy),
        final_epsilon: last.and_then(|t| t.cumulative_epsilon),
        warnings: result.warnings.clone(),
        notes,
        wall_clock_secs,
    }
}
