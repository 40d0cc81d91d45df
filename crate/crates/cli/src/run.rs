use crate::config::{parse_config, resolve, ExperimentConfig, LoadedExperiment};
use crate::output::{build_manifest, metrics_csv, write_atomic};
use crate::CliError;
use fedrobust::aggregate::AggregationRule;
use fedrobust::sim::train;
use fedrobust::sketch::SketchMatrix;
use fedrobust::tensor::ModelVector;
use std::path::Path;
use std::time::Instant;

pub fn run(config_path: &Path) -> Result<(), CliError> {
    let cfg = parse_config(config_path).map_err(CliError::Config)?;
    let loaded = resolve(&cfg).map_err(CliError::Config)?;
    execute(&cfg, &loaded).map(|_| ())
}

/// Runs one resolved experiment, writing metrics + manifest into the
/// config's output directory. Returns the final eval accuracy.
pub fn execute(cfg: &ExperimentConfig, loaded: &LoadedExperiment) -> Result<Option<f64>, CliError> {
    let started = Instant::now();
    let out_dir = &cfg.run.output_dir;

    let d = loaded.train_config.model.parameter_count();
    let k = SketchMatrix::dimension_for_rate(
        d,
        cfg.compression.rate,
        cfg.compression.blocks,
    )
    .map_err(|e| CliError::Config(e.to_string()))?;

    let result = match train(&loaded.train_config, &loaded.train_set, &loaded.eval_set) {
        Ok(r) => r,
        Err(e) => {
            // flag the aborted run so no output dir looks complete
            let _ = write_atomic(
                &out_dir.join("aborted.txt"),
                &format!("training aborted: {e}\n"),
            );
            return Err(CliError::Runtime(e.to_string()));
        }
    };

    for t in &result.transcripts {
        if t.uplink_floats_per_user != k {
            return Err(CliError::Runtime(format!(
                "round {}: uplink {} floats, expected k = {k}",
                t.round, t.uplink_floats_per_user
            )));
        }
    }
    if !ModelVector(result.final_params.0.clone()).all_finite() {
        return Err(CliError::Runtime("final parameters are not finite".into()));
    }

    let mut notes = Vec::new();
    if cfg.aggregator.rule == AggregationRule::TrimmedMean && cfg.federation.byzantine_count == 0
    {
        notes.push(
            "trimmed_mean with b = 0 is plain mean aggregation (the FedAvg baseline \
             under one local step and full participation)"
                .to_string(),
        );
    }

    write_atomic(&out_dir.join("metrics.csv"), &metrics_csv(&result.transcripts))
        .map_err(CliError::Runtime)?;
    let manifest = build_manifest(cfg, &result, k, started.elapsed().as_secs_f64(), notes);
    let manifest_json = serde_json::to_string_pretty(&manifest)
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    write_atomic(&out_dir.join("manifest.json"), &manifest_json).map_err(CliError::Runtime)?;

    Ok(manifest.final_eval_accuracy)
}
