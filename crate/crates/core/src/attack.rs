//! Poisoning attacks mounted by colluding malicious users. All vector-level
//! attacks operate in compressed space with full knowledge of the honest
//! users' compressed momenta for the current round; label flipping is the
//! exception and corrupts the malicious users' training data instead.

use crate::error::{Error, Result};
use crate::sketch::CompressedVector;
use crate::tensor::LabeledExample;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackKind {
    None,
    LabelFlip,
    SignFlip,
    Alie,
    MinMax,
    MinSum,
    Foe,
}

/// Perturbation direction for the min-max / min-sum search.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerturbDirection {
    NegStdDev,
    NegUnitMean,
    NegSignMean,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttackSpec {
    pub kind: AttackKind,
    #[serde(default = "default_scale")]
    pub sign_flip_scale: f64,
    #[serde(default = "default_scale")]
    pub foe_epsilon: f64,
    #[serde(default = "default_direction")]
    pub direction: PerturbDirection,
}

fn default_scale() -> f64 {
    1.0
}

fn default_direction() -> PerturbDirection {
    PerturbDirection::NegStdDev
}

impl AttackSpec {
    pub fn new(kind: AttackKind) -> Self {
        AttackSpec {
            kind,
            sign_flip_scale: 1.0,
            foe_epsilon: 1.0,
            direction: PerturbDirection::NegStdDev,
        }
    }
}

/// Label flipping: y -> numClasses - 1 - y. An involution on the label set.
pub fn flip_labels(dataset: &[LabeledExample], num_classes: usize) -> Vec<LabeledExample> {
    dataset
        .iter()
        .map(|ex| LabeledExample {
            features: ex.features.clone(),
            label: num_classes - 1 - ex.label,
        })
        .collect()
}

/// Sign flipping: send the negated (optionally scaled) own update.
pub fn sign_flip(own: &CompressedVector, scale: f64) -> CompressedVector {
    CompressedVector(own.0.iter().map(|x| -scale * x).collect())
}

fn column_mean_std(honest: &[CompressedVector]) -> (Vec<f64>, Vec<f64>) {
    let k = honest[0].len();
    let n = honest.len() as f64;
    let mut mean = vec![0.0; k];
    for v in honest {
        for (m, x) in mean.iter_mut().zip(&v.0) {
            *m += x / n;
        }
    }
    let mut std = vec![0.0; k];
    for v in honest {
        for ((s, x), m) in std.iter_mut().zip(&v.0).zip(&mean) {
            *s += (x - m) * (x - m) / n;
        }
    }
    for s in std.iter_mut() {
        *s = s.sqrt();
    }
    (mean, std)
}

/// A-little-is-enough: mean minus z times the per-coordinate standard
/// deviation of the honest updates, with z the standard normal quantile at
/// (n - floor(n/2 + 1)) / (n - b).
pub fn alie(honest: &[CompressedVector], n: usize, b: usize) -> Result<CompressedVector> {
    if honest.is_empty() {
        return Err(Error::EmptyInput("alie honest updates"));
    }
    let (mean, std) = column_mean_std(honest);
    if honest.len() == 1 {
        return Ok(CompressedVector(mean));
    }
    let arg = (n - (n / 2 + 1)) as f64 / (n - b) as f64;
    if !(0.0 < arg && arg < 1.0) {
        return Err(Error::Domain(format!(
            "alie quantile argument {arg} outside (0, 1) for n = {n}, b = {b}"
        )));
    }
    let z = Normal::new(0.0, 1.0).unwrap().inverse_cdf(arg);
    Ok(CompressedVector(
        mean.iter().zip(&std).map(|(m, s)| m - z * s).collect(),
    ))
}

const GAMMA_BRACKET_HI: f64 = 65536.0;
const BISECTION_ITERS: usize = 50;

/// Tolerance to which min-max / min-sum outputs satisfy their constraints.
pub const CONSTRAINT_TOL: f64 = 1e-6;

fn perturb_direction(
    direction: PerturbDirection,
    mean: &[f64],
    std: &[f64],
) -> Vec<f64> {
    let raw: Vec<f64> = match direction {
        PerturbDirection::NegStdDev => std.iter().map(|s| -s).collect(),
        PerturbDirection::NegUnitMean => mean.iter().map(|m| -m).collect(),
        PerturbDirection::NegSignMean => mean.iter().map(|m| -m.signum()).collect(),
    };
    let norm = raw.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        raw
    } else {
        raw.iter().map(|x| x / norm).collect()
    }
}

fn candidate(mean: &[f64], gamma: f64, delta: &[f64]) -> Vec<f64> {
    mean.iter().zip(delta).map(|(m, d)| m + gamma * d).collect()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Largest gamma in [0, hi] satisfying `feasible`, found by bisection.
/// Assumes gamma = 0 is feasible.
fn bisect_gamma(feasible: impl Fn(f64) -> bool) -> f64 {
    if feasible(GAMMA_BRACKET_HI) {
        return GAMMA_BRACKET_HI;
    }
    let (mut lo, mut hi) = (0.0, GAMMA_BRACKET_HI);
    for _ in 0..BISECTION_ITERS {
        let mid = 0.5 * (lo + hi);
        if feasible(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

fn minmax_minsum(
    honest: &[CompressedVector],
    direction: PerturbDirection,
    sum_variant: bool,
) -> Result<CompressedVector> {
    if honest.len() < 2 {
        return Err(Error::Config(
            "min-max/min-sum need at least 2 honest updates".into(),
        ));
    }
    let (mean, std) = column_mean_std(honest);
    let delta = perturb_direction(direction, &mean, &std);
    let rows: Vec<&[f64]> = honest.iter().map(|v| v.0.as_slice()).collect();

    let feasible: Box<dyn Fn(f64) -> bool> = if sum_variant {
        let budget = rows
            .iter()
            .map(|a| rows.iter().map(|b| dist(a, b).powi(2)).sum::<f64>())
            .fold(0.0, f64::max);
        Box::new(move |gamma: f64| {
            let c = candidate(&mean, gamma, &delta);
            rows.iter().map(|v| dist(&c, v).powi(2)).sum::<f64>() <= budget
        })
    } else {
        let diameter = rows
            .iter()
            .flat_map(|a| rows.iter().map(move |b| dist(a, b)))
            .fold(0.0, f64::max);
        Box::new(move |gamma: f64| {
            let c = candidate(&mean, gamma, &delta);
            rows.iter().map(|v| dist(&c, v)).fold(0.0, f64::max) <= diameter
        })
    };

    let gamma = bisect_gamma(&feasible);
    let (mean, std) = column_mean_std(honest);
    let delta = perturb_direction(direction, &mean, &std);
    let out = candidate(&mean, gamma, &delta);
    // the search only ever returns feasible gammas; a violation here means
    // the feasibility predicate and the returned point disagree
    assert!(feasible(gamma), "min-max/min-sum constraint violated");
    Ok(CompressedVector(out))
}

/// Min-max: push along the perturbation direction as far as the max distance
/// to any honest update stays within the honest diameter.
pub fn min_max(
    honest: &[CompressedVector],
    direction: PerturbDirection,
) -> Result<CompressedVector> {
    minmax_minsum(honest, direction, false)
}

/// Min-sum: push as far as the summed squared distance to the honest updates
/// stays within the worst honest user's own sum.
pub fn min_sum(
    honest: &[CompressedVector],
    direction: PerturbDirection,
) -> Result<CompressedVector> {
    minmax_minsum(honest, direction, true)
}

/// Fall-of-empires: negated scaled mean of the honest updates.
pub fn foe(honest: &[CompressedVector], epsilon: f64) -> Result<CompressedVector> {
    if honest.is_empty() {
        return Err(Error::EmptyInput("foe honest updates"));
    }
    let (mean, _) = column_mean_std(honest);
    Ok(CompressedVector(mean.iter().map(|m| -epsilon * m).collect()))
}

/// Crafts the b malicious submissions for one round.
///
/// `own_updates` holds the malicious users' own honest-pipeline outputs (for
/// label flipping these were computed on flipped data upstream). Collusion
/// attacks ignore them and send b identical copies of the crafted vector.
pub fn craft(
    spec: &AttackSpec,
    honest: &[CompressedVector],
    own_updates: &[CompressedVector],
    n: usize,
) -> Result<Vec<CompressedVector>> {
    let b = own_updates.len();
    match spec.kind {
        AttackKind::None | AttackKind::LabelFlip => Ok(own_updates.to_vec()),
        AttackKind::SignFlip => Ok(own_updates
            .iter()
            .map(|v| sign_flip(v, spec.sign_flip_scale))
            .collect()),
        AttackKind::Alie => {
            let v = alie(honest, n, b)?;
            Ok(vec![v; b])
        }
        AttackKind::MinMax => {
            let v = min_max(honest, spec.direction)?;
            Ok(vec![v; b])
        }
        AttackKind::MinSum => {
            let v = min_sum(honest, spec.direction)?;
            Ok(vec![v; b])
        }
        AttackKind::Foe => {
            let v = foe(honest, spec.foe_epsilon)?;
            Ok(vec![v; b])
        }
    }
}
