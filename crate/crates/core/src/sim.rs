//! Federated round orchestration: non-i.i.d. partitioning, per-user clipped
//! noisy momentum updates, compression, attack injection, robust aggregation,
//! decompression, and the global parameter update.

use crate::accountant::{default_alpha_grid, per_round_curve, rdp_to_dp, RdpLedger};
use crate::aggregate::{aggregate, AggregatorSpec};
use crate::attack::{craft, flip_labels, AttackKind, AttackSpec};
use crate::dp::{privatize_batch, DpConfig};
use crate::error::{Error, Result};
use crate::par;
use crate::rng::SeededRng;
use crate::sketch::{CompressedVector, SketchMatrix};
use crate::tensor::{
    loss_and_accuracy, per_sample_gradients, LabeledExample, ModelSpec, ModelVector,
};
use serde::{Deserialize, Serialize};

/// Piecewise-constant schedule: the value at round t comes from the last
/// piece whose start is <= t. Must have a piece starting at 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub pieces: Vec<(usize, f64)>,
}

impl Schedule {
    pub fn constant(value: f64) -> Self {
        Schedule {
            pieces: vec![(0, value)],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.pieces.first().map(|p| p.0) != Some(0) {
            return Err(Error::Config("schedule must start at round 0".into()));
        }
        if !self.pieces.windows(2).all(|w| w[0].0 < w[1].0) {
            return Err(Error::Config("schedule breakpoints must increase".into()));
        }
        Ok(())
    }

    pub fn at(&self, t: usize) -> f64 {
        self.pieces
            .iter()
            .rev()
            .find(|(start, _)| *start <= t)
            .map(|(_, v)| *v)
            .expect("validated schedule has a piece at 0")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub n_users: usize,
    pub byzantine_count: usize,
    pub rounds: usize,
    /// Local steps per round; values above 1 require DP disabled.
    pub local_steps: usize,
    pub global_lr: Schedule,
    pub momentum_beta: Schedule,
    /// Minibatch size per user per round.
    pub batch_size: usize,
    /// Own-group assignment probability of the label-skewed partition.
    pub partition_concentration: f64,
    pub model: ModelSpec,
    /// None disables clipping and noise (plain minibatch mean gradients).
    pub dp: Option<DpConfig>,
    pub aggregator: AggregatorSpec,
    pub attack: AttackSpec,
    /// Compression rate d/k; k is floor(d/rate) rounded down to a multiple
    /// of sketch_blocks.
    pub compression_rate: usize,
    pub sketch_blocks: usize,
    pub seed: u64,
    /// Evaluate loss/accuracy every this many rounds (and at the last round).
    pub eval_every: usize,
    /// Ablation: craft vector attacks on uncompressed momenta, then compress.
    pub attack_pre_compression: bool,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_users == 0 {
            return Err(Error::Config("n_users must be positive".into()));
        }
        if 2 * self.byzantine_count >= self.n_users {
            return Err(Error::Config(format!(
                "need b < n/2, got n = {}, b = {}",
                self.n_users, self.byzantine_count
            )));
        }
        if self.local_steps == 0 {
            return Err(Error::Config("local_steps must be >= 1".into()));
        }
        if self.local_steps > 1 && self.dp.is_some() {
            return Err(Error::Config(
                "local_steps > 1 is only supported with DP disabled; \
                 the sensitivity analysis covers single-gradient releases"
                    .into(),
            ));
        }
        self.global_lr.validate()?;
        self.momentum_beta.validate()?;
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if !(0.0 < self.partition_concentration && self.partition_concentration <= 1.0) {
            return Err(Error::Config(format!(
                "partition_concentration must be in (0, 1], got {}",
                self.partition_concentration
            )));
        }
        self.model.validate()?;
        if let Some(dp) = &self.dp {
            dp.validate()?;
            if dp.batch_size != self.batch_size {
                return Err(Error::Config(format!(
                    "dp.batch_size {} must match batch_size {}",
                    dp.batch_size, self.batch_size
                )));
            }
        }
        if self.compression_rate == 0 || self.sketch_blocks == 0 {
            return Err(Error::Config(
                "compression_rate and sketch_blocks must be positive".into(),
            ));
        }
        if self.eval_every == 0 {
            return Err(Error::Config("eval_every must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct UserState {
    pub shard: Vec<LabeledExample>,
    pub momentum: ModelVector,
    pub rng: SeededRng,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundTranscript {
    pub round: usize,
    /// All n submissions in user order (crafted for malicious users).
    pub submissions: Vec<Vec<f64>>,
    /// Aggregate in compressed space.
    pub aggregate: Vec<f64>,
    /// Decompressed global update, length d.
    pub update: Vec<f64>,
    pub uplink_floats_per_user: usize,
    pub train_loss: Option<f64>,
    pub eval_accuracy: Option<f64>,
    /// Cumulative (epsilon, delta = 1e-5) of the releases so far; None when
    /// DP is disabled.
    pub cumulative_epsilon: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainResult {
    pub transcripts: Vec<RoundTranscript>,
    pub final_params: ModelVector,
    /// Non-fatal notes (e.g. partition fallbacks) for the run manifest.
    pub warnings: Vec<String>,
}

pub const PARTITION_GROUPS: usize = 10;
pub const ACCOUNTANT_DELTA: f64 = 1e-5;

/// Label-skewed partition: a sample with label j goes to group j mod groups
/// with probability `a`, otherwise uniformly to one of the other groups;
/// within a group, samples are spread uniformly over the group's users.
/// Falls back to one group per user when n < PARTITION_GROUPS, reporting the
/// fallback through `warnings`.
pub fn partition_noniid(
    dataset: &[LabeledExample],
    n_users: usize,
    a: f64,
    rng: &mut SeededRng,
    warnings: &mut Vec<String>,
) -> Result<Vec<Vec<LabeledExample>>> {
    if n_users == 0 {
        return Err(Error::Config("cannot partition over 0 users".into()));
    }
    if !(0.0 < a && a <= 1.0) {
        return Err(Error::Config(format!("need 0 < a <= 1, got {a}")));
    }
    let groups = if n_users < PARTITION_GROUPS {
        warnings.push(format!(
            "partition fallback: {n_users} users < {PARTITION_GROUPS} groups, using {n_users} groups"
        ));
        n_users
    } else {
        PARTITION_GROUPS
    };
    // users assigned to groups round-robin; group g owns users {i : i % groups == g}
    let mut group_users: Vec<Vec<usize>> = vec![Vec::new(); groups];
    for i in 0..n_users {
        group_users[i % groups].push(i);
    }
    let mut shards: Vec<Vec<LabeledExample>> = vec![Vec::new(); n_users];
    for ex in dataset {
        let own = ex.label % groups;
        let g = if groups == 1 || rng.uniform() < a {
            own
        } else {
            // uniform over the other groups
            let pick = rng.below(groups - 1);
            if pick >= own {
                pick + 1
            } else {
                pick
            }
        };
        let user = group_users[g][rng.below(group_users[g].len())];
        shards[user].push(ex.clone());
    }
    Ok(shards)
}

/// Uniform batch_size-subset of the shard without replacement.
pub fn sample_minibatch<'a>(
    shard: &'a [LabeledExample],
    batch_size: usize,
    rng: &mut SeededRng,
) -> Result<Vec<&'a LabeledExample>> {
    if batch_size > shard.len() {
        return Err(Error::Config(format!(
            "batch_size {batch_size} exceeds shard size {}",
            shard.len()
        )));
    }
    let idx = rng.sample_without_replacement(shard.len(), batch_size);
    Ok(idx.into_iter().map(|i| &shard[i]).collect())
}

fn batch_gradient(
    model: &ModelSpec,
    params: &ModelVector,
    batch: &[&LabeledExample],
    dp: &Option<DpConfig>,
    rng: &mut SeededRng,
) -> Result<ModelVector> {
    let owned: Vec<LabeledExample> = batch.iter().map(|&e| e.clone()).collect();
    let grads = per_sample_gradients(model, params, &owned)?;
    match dp {
        Some(cfg) => privatize_batch(&grads, cfg, rng),
        None => {
            let mut mean = ModelVector::zeros(params.len());
            for g in &grads {
                mean.axpy(1.0 / grads.len() as f64, g);
            }
            Ok(mean)
        }
    }
}

/// One user's round: sample a minibatch, produce the (possibly privatized)
/// gradient, fold it into the momentum, and return both the compressed
/// momentum and the uncompressed momentum (for the pre-compression attack
/// ablation). Mutates the user's momentum and RNG.
pub fn user_round(
    state: &mut UserState,
    global_params: &ModelVector,
    cfg: &TrainConfig,
    sketch: &SketchMatrix,
    round: usize,
) -> Result<(CompressedVector, ModelVector)> {
    let beta = cfg.momentum_beta.at(round);
    let batch = sample_minibatch(&state.shard, cfg.batch_size, &mut state.rng)?;
    let g = if cfg.local_steps == 1 {
        batch_gradient(&cfg.model, global_params, &batch, &cfg.dp, &mut state.rng)?
    } else {
        // local SGD at the global rate; the released quantity is the mean of
        // the local gradients (DP is rejected at validation for this path)
        let lr = cfg.global_lr.at(round);
        let mut local = global_params.clone();
        let mut mean = ModelVector::zeros(global_params.len());
        for _ in 0..cfg.local_steps {
            let gj = batch_gradient(&cfg.model, &local, &batch, &None, &mut state.rng)?;
            local.axpy(-lr, &gj);
            mean.axpy(1.0 / cfg.local_steps as f64, &gj);
        }
        mean
    };
    let mut m = state.momentum.scale(beta);
    m.axpy(1.0 - beta, &g);
    state.momentum = m.clone();
    Ok((sketch.compress(&m), m))
}

/// Federator step: robust aggregation in compressed space, then decompression.
pub fn federator_round(
    submissions: &[CompressedVector],
    aggregator: &AggregatorSpec,
    sketch: &SketchMatrix,
) -> Result<(ModelVector, CompressedVector)> {
    let rows: Vec<Vec<f64>> = submissions.iter().map(|c| c.0.clone()).collect();
    let agg = CompressedVector(aggregate(aggregator, &rows)?);
    let update = sketch.decompress(&agg);
    Ok((update, agg))
}

fn craft_submissions(
    cfg: &TrainConfig,
    sketch: &SketchMatrix,
    compressed: &[CompressedVector],
    momenta: &[ModelVector],
) -> Result<Vec<CompressedVector>> {
    let b = cfg.byzantine_count;
    let n = cfg.n_users;
    if b == 0 {
        return Ok(compressed.to_vec());
    }
    let own_c = &compressed[..b];
    let honest_c = &compressed[b..];
    let crafted = if cfg.attack_pre_compression {
        let wrap =
            |ms: &[ModelVector]| -> Vec<CompressedVector> {
                ms.iter().map(|m| CompressedVector(m.0.clone())).collect()
            };
        let raw = craft(&cfg.attack, &wrap(&momenta[b..]), &wrap(&momenta[..b]), n)?;
        raw.iter()
            .map(|c| sketch.compress(&ModelVector(c.0.clone())))
            .collect()
    } else {
        craft(&cfg.attack, honest_c, own_c, n)?
    };
    let mut out = crafted;
    out.extend_from_slice(honest_c);
    Ok(out)
}

/// Runs the full training loop. Malicious users are indices 0..b; with label
/// flipping their shards are flipped once at setup and they otherwise follow
/// the honest pipeline. Any error aborts with the partial transcript attached
/// to the error path; successful runs return all T transcripts.
pub fn train(
    cfg: &TrainConfig,
    dataset: &[LabeledExample],
    eval_set: &[LabeledExample],
) -> Result<TrainResult> {
    cfg.validate()?;
    let d = cfg.model.parameter_count();
    let k = SketchMatrix::dimension_for_rate(d, cfg.compression_rate, cfg.sketch_blocks)?;
    let sketch = SketchMatrix::new(d, k, cfg.sketch_blocks, cfg.seed)?;

    let mut warnings = Vec::new();
    let mut partition_rng = SeededRng::new(cfg.seed, 1);
    let mut shards = partition_noniid(
        dataset,
        cfg.n_users,
        cfg.partition_concentration,
        &mut partition_rng,
        &mut warnings,
    )?;
    for (i, shard) in shards.iter().enumerate() {
        if shard.len() < cfg.batch_size {
            return Err(Error::Config(format!(
                "user {i} shard has {} samples, below batch_size {}",
                shard.len(),
                cfg.batch_size
            )));
        }
    }
    if cfg.attack.kind == AttackKind::LabelFlip {
        for shard in shards.iter_mut().take(cfg.byzantine_count) {
            *shard = flip_labels(shard, cfg.model.num_classes);
        }
    }

    let mut states: Vec<UserState> = shards
        .into_iter()
        .enumerate()
        .map(|(i, shard)| UserState {
            shard,
            momentum: ModelVector::zeros(d),
            rng: SeededRng::new(cfg.seed, 1000 + i as u64),
        })
        .collect();

    let mut ledger = cfg.dp.as_ref().and_then(|dp| {
        if dp.noise_scale == 0.0 {
            return None;
        }
        let q = dp.batch_size as f64 / dp.dataset_size as f64;
        per_round_curve(dp.sensitivity(), dp.noise_scale, q, &default_alpha_grid())
            .ok()
            .map(RdpLedger::new)
    });

    let mut params = ModelVector::zeros(d);
    let mut transcripts = Vec::with_capacity(cfg.rounds);
    for t in 0..cfg.rounds {
        let round_states = std::mem::take(&mut states);
        let params_ref = &params;
        let sketch_ref = &sketch;
        let results = par::map(round_states, |mut st| {
            let r = user_round(&mut st, params_ref, cfg, sketch_ref, t);
            (st, r)
        });
        let mut compressed = Vec::with_capacity(cfg.n_users);
        let mut momenta = Vec::with_capacity(cfg.n_users);
        for (st, r) in results {
            let (c, m) = r?;
            states.push(st);
            compressed.push(c);
            momenta.push(m);
        }

        let submissions = craft_submissions(cfg, &sketch, &compressed, &momenta)?;
        for s in &submissions {
            if s.len() != k {
                return Err(Error::Unreachable(format!(
                    "submission length {} != k = {k}",
                    s.len()
                )));
            }
        }
        let (update, agg) = federator_round(&submissions, &cfg.aggregator, &sketch)?;
        params.axpy(-cfg.global_lr.at(t), &update);

        let cumulative_epsilon = ledger.as_mut().map(|l| {
            l.advance();
            rdp_to_dp(&l.composed(), ACCOUNTANT_DELTA).0
        });

        let evaluate = (t + 1) % cfg.eval_every == 0 || t + 1 == cfg.rounds;
        let (train_loss, eval_accuracy) = if evaluate {
            let mut loss_sum = 0.0;
            let mut count = 0usize;
            for st in &states {
                let (l, _) = loss_and_accuracy(&cfg.model, &params, &st.shard)?;
                loss_sum += l * st.shard.len() as f64;
                count += st.shard.len();
            }
            let acc = if eval_set.is_empty() {
                None
            } else {
                Some(loss_and_accuracy(&cfg.model, &params, eval_set)?.1)
            };
            (Some(loss_sum / count as f64), acc)
        } else {
            (None, None)
        };

        transcripts.push(RoundTranscript {
            round: t,
            submissions: submissions.into_iter().map(|c| c.0).collect(),
            aggregate: agg.0,
            update: update.0,
            uplink_floats_per_user: k,
            train_loss,
            eval_accuracy,
            cumulative_epsilon,
        });
    }

    Ok(TrainResult {
        transcripts,
        final_params: params,
        warnings,
    })
}
