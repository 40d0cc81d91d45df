use crate::config::{parse_config, resolve};
use crate::CliError;
use fedrobust::accountant::{default_alpha_grid, per_round_curve, rdp_to_dp};
use fedrobust::sim::ACCOUNTANT_DELTA;
use std::path::Path;

/// Prints the privacy report for a config without training: the per-round
/// Renyi curve endpoints and the composed (epsilon, delta) after T rounds.
pub fn account(config_path: &Path) -> Result<(), CliError> {
    let cfg = parse_config(config_path).map_err(CliError::Config)?;
    let loaded = resolve(&cfg).map_err(CliError::Config)?;

    let Some(dp) = &loaded.train_config.dp else {
        println!("dp disabled: no privacy accounting for this config");
        return Ok(());
    };
    if dp.noise_scale == 0.0 {
        println!("noise multiplier is 0: no formal privacy guarantee");
        return Ok(());
    }

    let q = dp.batch_size as f64 / dp.dataset_size as f64;
    let grid = default_alpha_grid();
    let per_round = per_round_curve(dp.sensitivity(), dp.noise_scale, q, &grid)
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    let rounds = cfg.run.rounds;
    let (per_eps, per_alpha) = rdp_to_dp(&per_round, ACCOUNTANT_DELTA);
    let composed = per_round.scale(rounds as f64);
    let (total_eps, total_alpha) = rdp_to_dp(&composed, ACCOUNTANT_DELTA);

    println!("sensitivity: {}", dp.sensitivity());
    println!("noise scale: {}", dp.noise_scale);
    println!("subsampling ratio q: {q}");
    println!("rounds: {rounds}");
    println!("delta: {ACCOUNTANT_DELTA}");
    println!("per-round epsilon: {per_eps} (alpha = {per_alpha})");
    println!("composed epsilon: {total_eps} (alpha = {total_alpha})");
    Ok(())
}
