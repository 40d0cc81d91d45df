use crate::config::{parse_config_text, resolve, ExperimentConfig};
use crate::output::write_atomic;
use crate::run::execute;
use crate::CliError;
use fedrobust::aggregate::AggregationRule;
use fedrobust::attack::AttackKind;
use serde::Deserialize;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

pub const WORKERS_ENV: &str = "FEDROBUST_SWEEP_WORKERS";

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SweepConfig {
    schema_version: u32,
    output_dir: PathBuf,
    grid: GridSection,
    base: ExperimentConfig,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct GridSection {
    attacks: Vec<AttackKind>,
    rules: Vec<AggregationRule>,
    rates: Vec<usize>,
    noise_multipliers: Vec<f64>,
    seeds: Vec<u64>,
}

#[derive(Debug, Clone)]
struct Cell {
    attack: AttackKind,
    rule: AggregationRule,
    rate: usize,
    noise_multiplier: f64,
    seed: u64,
}

fn snake<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_value(v)
        .ok()
        .and_then(|j| j.as_str().map(str::to_string))
        .unwrap_or_else(|| "unknown".to_string())
}

fn cell_config(base: &ExperimentConfig, out_root: &Path, cell: &Cell) -> ExperimentConfig {
    let mut cfg = base.clone();
    cfg.attack.kind = cell.attack;
    cfg.aggregator.rule = cell.rule;
    cfg.compression.rate = cell.rate;
    if let Some(dp) = cfg.dp.as_mut() {
        dp.noise_multiplier = cell.noise_multiplier;
    }
    cfg.run.seed = cell.seed;
    cfg.run.output_dir = out_root.join(format!(
        "{}-{}-r{}-nm{}-s{}",
        snake(&cell.attack),
        snake(&cell.rule),
        cell.rate,
        cell.noise_multiplier,
        cell.seed
    ));
    cfg
}

fn run_cell(cfg: &ExperimentConfig) -> Result<Option<f64>, String> {
    let loaded = resolve(cfg).map_err(|e| e)?;
    execute(cfg, &loaded).map_err(|e| match e {
        CliError::Config(m) | CliError::Runtime(m) => m,
    })
}

fn worker_count() -> usize {
    std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&w| w >= 1)
        .unwrap_or(1)
}

/// Runs the attack x rule x rate x noise x seed cross product with a bounded
/// worker pool, then writes a summary of final accuracies (mean and standard
/// deviation across seeds). Cell failures are recorded and do not stop the
/// sweep.
pub fn sweep(grid_path: &Path) -> Result<(), CliError> {
    let text = std::fs::read_to_string(grid_path)
        .map_err(|e| CliError::Config(format!("{}: {e}", grid_path.display())))?;
    let sweep_cfg: SweepConfig = toml::from_str(&text)
        .map_err(|e| CliError::Config(format!("{}: {e}", grid_path.display())))?;
    if sweep_cfg.schema_version != crate::config::SCHEMA_VERSION {
        return Err(CliError::Config(format!(
            "unsupported sweep schema_version {}",
            sweep_cfg.schema_version
        )));
    }
    // validate the base config the same way a standalone file would be
    parse_config_text(&toml::to_string(&sweep_cfg.base).map_err(|e| {
        CliError::Config(format!("cannot re-serialize base config: {e}"))
    })?)
    .map_err(CliError::Config)?;

    let mut cells = Vec::new();
    for &seed in &sweep_cfg.grid.seeds {
        for &attack in &sweep_cfg.grid.attacks {
            for &rule in &sweep_cfg.grid.rules {
                for &rate in &sweep_cfg.grid.rates {
                    for &noise_multiplier in &sweep_cfg.grid.noise_multipliers {
                        cells.push(Cell {
                            attack,
                            rule,
                            rate,
                            noise_multiplier,
                            seed,
                        });
                    }
                }
            }
        }
    }

    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<(usize, Result<Option<f64>, String>)>> =
        Mutex::new(Vec::with_capacity(cells.len()));
    let workers = worker_count().min(cells.len().max(1));
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= cells.len() {
                    break;
                }
                let cfg = cell_config(&sweep_cfg.base, &sweep_cfg.output_dir, &cells[i]);
                let outcome = run_cell(&cfg);
                results.lock().unwrap().push((i, outcome));
            });
        }
    });
    let mut results = results.into_inner().unwrap();
    results.sort_by_key(|(i, _)| *i);

    // summarize across seeds per (attack, rule, rate, noise)
    let mut summary = String::from(
        "attack,rule,rate,noise_multiplier,num_seeds,mean_accuracy,std_accuracy,failures\n",
    );
    let mut group_keys: Vec<(AttackKind, AggregationRule, usize, String)> = Vec::new();
    for cell in &cells {
        let key = (
            cell.attack,
            cell.rule,
            cell.rate,
            format!("{}", cell.noise_multiplier),
        );
        if !group_keys.contains(&key) {
            group_keys.push(key);
        }
    }
    for key in &group_keys {
        let mut accs = Vec::new();
        let mut failures = 0usize;
        for (cell, (_, outcome)) in cells.iter().zip(&results) {
            let cell_key = (
                cell.attack,
                cell.rule,
                cell.rate,
                format!("{}", cell.noise_multiplier),
            );
            if cell_key != *key {
                continue;
            }
            match outcome {
                Ok(Some(acc)) => accs.push(*acc),
                Ok(None) => {}
                Err(msg) => {
                    eprintln!(
                        "cell failed ({} {} r{} nm{} seed {}): {msg}",
                        snake(&cell.attack),
                        snake(&cell.rule),
                        cell.rate,
                        cell.noise_multiplier,
                        cell.seed
                    );
                    failures += 1;
                }
            }
        }
        let (mean, std) = mean_std(&accs);
        summary.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            snake(&key.0),
            snake(&key.1),
            key.2,
            key.3,
            accs.len(),
            mean,
            std,
            failures
        ));
    }
    write_atomic(&sweep_cfg.output_dir.join("summary.csv"), &summary)
        .map_err(CliError::Runtime)?;
    Ok(())
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    if xs.len() == 1 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (xs.len() - 1) as f64;
    (mean, var.sqrt())
}
