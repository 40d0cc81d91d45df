use crate::config::{parse_config, resolve};
use crate::output::write_atomic;
use crate::CliError;
use fedrobust::aggregate::{
    empirical_kappa, empirical_kappa_sampled, robust_compat_check, KAPPA_ENUMERATION_LIMIT,
};
use fedrobust::rng::SeededRng;
use fedrobust::sketch::SketchMatrix;
use fedrobust::tensor::ModelVector;
use std::path::Path;

const CERT_SEEDS: u64 = 100;
const SAMPLED_SUBSETS: usize = 200;
/// Certification runs on sketches of this dimension, not the full model, to
/// keep subset enumeration tractable.
const CERT_DIM: usize = 64;

/// Certifies the configured aggregation rule on random Gaussian instances:
/// the empirical robustness coefficient per instance, and the compressed-
/// pipeline compatibility check at the config's rate. Writes kappa.csv and
/// prints a summary.
pub fn kappa(config_path: &Path) -> Result<(), CliError> {
    let cfg = parse_config(config_path).map_err(CliError::Config)?;
    let loaded = resolve(&cfg).map_err(CliError::Config)?;
    let n = loaded.train_config.n_users;
    let b = loaded.train_config.byzantine_count;
    let spec = loaded.train_config.aggregator;

    let d = CERT_DIM;
    let k = SketchMatrix::dimension_for_rate(d, cfg.compression.rate, cfg.compression.blocks)
        .map_err(|e| CliError::Config(e.to_string()))?;

    let mut rows = vec!["seed,kappa,degenerate,compat_holds".to_string()];
    let mut kappas = Vec::new();
    let mut holds = 0usize;
    for seed in 0..CERT_SEEDS {
        let mut rng = SeededRng::new(cfg.run.seed ^ seed, 0);
        let vectors: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..d).map(|_| rng.standard_normal()).collect())
            .collect();
        let cert = if n <= KAPPA_ENUMERATION_LIMIT {
            empirical_kappa(&spec, &vectors, b)
        } else {
            empirical_kappa_sampled(&spec, &vectors, b, SAMPLED_SUBSETS, &mut rng)
        }
        .map_err(|e| CliError::Runtime(e.to_string()))?;
        kappas.push(cert.empirical_kappa);

        let compat_holds = if n <= KAPPA_ENUMERATION_LIMIT {
            let sketch = SketchMatrix::new(d, k, cfg.compression.blocks, seed)
                .map_err(|e| CliError::Runtime(e.to_string()))?;
            let model_vecs: Vec<ModelVector> =
                vectors.iter().map(|v| ModelVector(v.clone())).collect();
            let report = robust_compat_check(&spec, &sketch, &model_vecs, b)
                .map_err(|e| CliError::Runtime(e.to_string()))?;
            if report.holds {
                holds += 1;
            }
            Some(report.holds)
        } else {
            None
        };
        rows.push(format!(
            "{seed},{},{},{}",
            cert.empirical_kappa,
            cert.degenerate,
            compat_holds.map(|h| h.to_string()).unwrap_or_default()
        ));
    }

    let mean = kappas.iter().sum::<f64>() / kappas.len() as f64;
    let max = kappas.iter().cloned().fold(0.0, f64::max);
    println!("rule: {:?}, nnm: {}, n = {n}, b = {b}", spec.rule, spec.nnm_enabled);
    println!("instances: {CERT_SEEDS} (d = {d}, k = {k})");
    println!("empirical kappa: mean {mean}, max {max}");
    if n <= KAPPA_ENUMERATION_LIMIT {
        println!("compatibility bound held on {holds}/{CERT_SEEDS} instances");
    } else {
        println!("n > {KAPPA_ENUMERATION_LIMIT}: sampled lower-bound mode, compatibility check skipped");
    }

    let mut csv = rows.join("\n");
    csv.push('\n');
    write_atomic(&cfg.run.output_dir.join("kappa.csv"), &csv).map_err(CliError::Runtime)?;
    Ok(())
}
