//! Experiment configuration: a versioned TOML schema resolved into the
//! library's TrainConfig. Unknown keys are errors so that drift between
//! config files and the schema never passes silently.

use fedrobust::aggregate::{AggregationRule, AggregatorSpec};
use fedrobust::attack::{AttackKind, AttackSpec, PerturbDirection};
use fedrobust::dp::DpConfig;
use fedrobust::sim::{Schedule, TrainConfig};
use fedrobust::tensor::{Architecture, LabeledExample, ModelSpec};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub run: RunSection,
    pub data: DataSection,
    pub model: ModelSection,
    pub federation: FederationSection,
    pub optimizer: OptimizerSection,
    #[serde(default)]
    pub dp: Option<DpSection>,
    pub compression: CompressionSection,
    pub aggregator: AggregatorSection,
    #[serde(default)]
    pub attack: AttackSection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub seed: u64,
    pub rounds: usize,
    #[serde(default = "default_eval_every")]
    pub eval_every: usize,
    pub output_dir: PathBuf,
}

fn default_eval_every() -> usize {
    50
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "snake_case", tag = "source")]
pub enum DataSection {
    Synthetic {
        num_classes: usize,
        input_dim: usize,
        samples_per_class: usize,
        margin: f64,
        data_seed: u64,
        /// Fraction of the generated data held out for evaluation.
        #[serde(default = "default_eval_fraction")]
        eval_fraction: f64,
    },
    Idx {
        train_images: PathBuf,
        train_labels: PathBuf,
        eval_images: PathBuf,
        eval_labels: PathBuf,
        num_classes: usize,
    },
}

fn default_eval_fraction() -> f64 {
    0.2
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub architecture: Architecture,
    #[serde(default)]
    pub hidden_dim: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FederationSection {
    pub n_users: usize,
    pub byzantine_count: usize,
    #[serde(default = "default_local_steps")]
    pub local_steps: usize,
    pub batch_size: usize,
    #[serde(default = "default_concentration")]
    pub partition_concentration: f64,
}

fn default_local_steps() -> usize {
    1
}

fn default_concentration() -> f64 {
    0.5
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerSection {
    /// Piecewise-constant schedule as [[start_round, value], ...].
    pub global_lr: Vec<(usize, f64)>,
    #[serde(default = "default_beta")]
    pub momentum_beta: Vec<(usize, f64)>,
}

fn default_beta() -> Vec<(usize, f64)> {
    vec![(0, 0.9)]
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DpSection {
    pub clip_norm: f64,
    /// Noise multiplier; noise scale is (2C / batch_size) times this.
    pub noise_multiplier: f64,
    /// Per-user dataset size used for the subsampling ratio; defaults to
    /// total training samples divided by n_users.
    #[serde(default)]
    pub dataset_size: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompressionSection {
    /// Compression rate d/k.
    pub rate: usize,
    /// Count-sketch block count p.
    pub blocks: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AggregatorSection {
    pub rule: AggregationRule,
    #[serde(default)]
    pub nnm: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackSection {
    pub kind: AttackKind,
    #[serde(default = "default_one")]
    pub sign_flip_scale: f64,
    #[serde(default = "default_one")]
    pub foe_epsilon: f64,
    #[serde(default = "default_direction")]
    pub direction: PerturbDirection,
    #[serde(default)]
    pub pre_compression: bool,
}

fn default_one() -> f64 {
    1.0
}

fn default_direction() -> PerturbDirection {
    PerturbDirection::NegStdDev
}

impl Default for AttackSection {
    fn default() -> Self {
        AttackSection {
            kind: AttackKind::None,
            sign_flip_scale: 1.0,
            foe_epsilon: 1.0,
            direction: PerturbDirection::NegStdDev,
            pre_compression: false,
        }
    }
}

#[derive(Debug)]
pub struct LoadedExperiment {
    pub config: ExperimentConfig,
    pub train_config: TrainConfig,
    pub train_set: Vec<LabeledExample>,
    pub eval_set: Vec<LabeledExample>,
}

pub fn parse_config(path: &Path) -> Result<ExperimentConfig, String> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| format!("{}: {e}", path.display()))?;
    parse_config_text(&text).map_err(|e| format!("{}: {e}", path.display()))
}

pub fn parse_config_text(text: &str) -> Result<ExperimentConfig, String> {
    let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| e.to_string())?;
    if cfg.schema_version != SCHEMA_VERSION {
        return Err(format!(
            "schema_version {} unsupported (expected {SCHEMA_VERSION})",
            cfg.schema_version
        ));
    }
    Ok(cfg)
}

fn model_spec(cfg: &ExperimentConfig, input_dim: usize, num_classes: usize) -> ModelSpec {
    match cfg.model.architecture {
        Architecture::Logistic => ModelSpec::logistic(input_dim, num_classes),
        Architecture::Mlp2 => ModelSpec::mlp2(input_dim, cfg.model.hidden_dim, num_classes),
    }
}

/// Loads the dataset and resolves the full training configuration.
pub fn resolve(cfg: &ExperimentConfig) -> Result<LoadedExperiment, String> {
    let (train_set, eval_set, input_dim, num_classes) = match &cfg.data {
        DataSection::Synthetic {
            num_classes,
            input_dim,
            samples_per_class,
            margin,
            data_seed,
            eval_fraction,
        } => {
            if !(0.0..1.0).contains(eval_fraction) {
                return Err(format!("eval_fraction must be in [0, 1), got {eval_fraction}"));
            }
            let all = fedrobust::data::generate_synthetic(
                *num_classes,
                *input_dim,
                *samples_per_class,
                *margin,
                *data_seed,
            )
            .map_err(|e| e.to_string())?;
            // deterministic stratified split: the last eval_fraction of each
            // class block is held out
            let held = (*samples_per_class as f64 * eval_fraction).floor() as usize;
            let mut train = Vec::new();
            let mut eval = Vec::new();
            for (i, ex) in all.into_iter().enumerate() {
                if i % samples_per_class < samples_per_class - held {
                    train.push(ex);
                } else {
                    eval.push(ex);
                }
            }
            (train, eval, *input_dim, *num_classes)
        }
        DataSection::Idx {
            train_images,
            train_labels,
            eval_images,
            eval_labels,
            num_classes,
        } => {
            let train = fedrobust::data::load_idx(train_images, train_labels)
                .map_err(|e| e.to_string())?;
            let eval = fedrobust::data::load_idx(eval_images, eval_labels)
                .map_err(|e| e.to_string())?;
            let input_dim = train
                .first()
                .map(|e| e.features.len())
                .ok_or("idx training set is empty")?;
            (train, eval, input_dim, *num_classes)
        }
    };

    let dp = match &cfg.dp {
        None => None,
        Some(s) => {
            let dataset_size = s
                .dataset_size
                .unwrap_or(train_set.len() / cfg.federation.n_users.max(1));
            Some(
                DpConfig::from_noise_multiplier(
                    s.clip_norm,
                    s.noise_multiplier,
                    cfg.federation.batch_size,
                    dataset_size,
                )
                .map_err(|e| e.to_string())?,
            )
        }
    };

    let train_config = TrainConfig {
        n_users: cfg.federation.n_users,
        byzantine_count: cfg.federation.byzantine_count,
        rounds: cfg.run.rounds,
        local_steps: cfg.federation.local_steps,
        global_lr: Schedule {
            pieces: cfg.optimizer.global_lr.clone(),
        },
        momentum_beta: Schedule {
            pieces: cfg.optimizer.momentum_beta.clone(),
        },
        batch_size: cfg.federation.batch_size,
        partition_concentration: cfg.federation.partition_concentration,
        model: model_spec(cfg, input_dim, num_classes),
        dp,
        aggregator: AggregatorSpec::new(
            cfg.aggregator.rule,
            cfg.federation.byzantine_count,
            cfg.aggregator.nnm,
        ),
        attack: AttackSpec {
            kind: cfg.attack.kind,
            sign_flip_scale: cfg.attack.sign_flip_scale,
            foe_epsilon: cfg.attack.foe_epsilon,
            direction: cfg.attack.direction,
        },
        compression_rate: cfg.compression.rate,
        sketch_blocks: cfg.compression.blocks,
        seed: cfg.run.seed,
        eval_every: cfg.run.eval_every,
        attack_pre_compression: cfg.attack.pre_compression,
    };
    train_config.validate().map_err(|e| e.to_string())?;

    Ok(LoadedExperiment {
        config: cfg.clone(),
        train_config,
        train_set,
        eval_set,
    })
}
