//! Per-sample gradient clipping, minibatch averaging, and Gaussian noise
//! injection. The noiseless average of clipped gradients over adjacent
//! minibatches moves by at most 2C/batch_size, which is the sensitivity the
//! accountant consumes.

use crate::error::{Error, Result};
use crate::rng::SeededRng;
use crate::tensor::{per_sample_gradients, LabeledExample, ModelSpec, ModelVector};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DpConfig {
    /// Clipping norm C.
    pub clip_norm: f64,
    /// Gaussian noise scale applied per coordinate. 0 disables DP.
    pub noise_scale: f64,
    /// Minibatch size.
    pub batch_size: usize,
    /// Per-user dataset size.
    pub dataset_size: usize,
}

impl DpConfig {
    /// Build from a noise multiplier: noise_scale = (2C / batch_size) * multiplier.
    pub fn from_noise_multiplier(
        clip_norm: f64,
        noise_multiplier: f64,
        batch_size: usize,
        dataset_size: usize,
    ) -> Result<Self> {
        let cfg = DpConfig {
            clip_norm,
            noise_scale: 2.0 * clip_norm / batch_size as f64 * noise_multiplier,
            batch_size,
            dataset_size,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.clip_norm <= 0.0 {
            return Err(Error::Config("clip_norm must be positive".into()));
        }
        if self.noise_scale < 0.0 {
            return Err(Error::Config("noise_scale must be non-negative".into()));
        }
        if self.batch_size == 0 || self.batch_size > self.dataset_size {
            return Err(Error::Config(format!(
                "need 0 < batch_size <= dataset_size, got {}/{}",
                self.batch_size, self.dataset_size
            )));
        }
        Ok(())
    }

    /// L2 sensitivity of the clipped minibatch mean: 2C / batch_size.
    pub fn sensitivity(&self) -> f64 {
        2.0 * self.clip_norm / self.batch_size as f64
    }
}

/// Scale `g` by min{1, C/||g||}. Identity on the C-ball; zero maps to zero.
pub fn clip(g: &ModelVector, clip_norm: f64) -> ModelVector {
    assert!(clip_norm > 0.0, "clip norm must be positive");
    let norm = g.l2_norm();
    if norm <= clip_norm {
        g.clone()
    } else {
        g.scale(clip_norm / norm)
    }
}

/// Mean of clipped per-sample gradients plus i.i.d. per-coordinate Gaussian
/// noise of scale `cfg.noise_scale`.
pub fn privatize_batch(
    per_sample_grads: &[ModelVector],
    cfg: &DpConfig,
    rng: &mut SeededRng,
) -> Result<ModelVector> {
    if per_sample_grads.is_empty() {
        return Err(Error::EmptyInput("privatize_batch gradients"));
    }
    if per_sample_grads.len() != cfg.batch_size {
        return Err(Error::Config(format!(
            "expected {} per-sample gradients, got {}",
            cfg.batch_size,
            per_sample_grads.len()
        )));
    }
    let d = per_sample_grads[0].len();
    let mut acc = ModelVector::zeros(d);
    for g in per_sample_grads {
        acc.add_assign(&clip(g, cfg.clip_norm));
    }
    let inv = 1.0 / cfg.batch_size as f64;
    let mut out = acc.scale(inv);
    if cfg.noise_scale > 0.0 {
        for v in out.0.iter_mut() {
            *v += rng.normal(0.0, cfg.noise_scale);
        }
    }
    Ok(out)
}

/// Empirically probes the adjacent-minibatch sensitivity of the noiseless
/// clipped mean: draws minibatch pairs differing in one element and returns
/// the largest observed distance. The contract is that the result never
/// exceeds 2C/batch_size.
pub fn sensitivity_oracle(
    model: &ModelSpec,
    params: &ModelVector,
    dataset: &[LabeledExample],
    cfg: &DpConfig,
    trials: usize,
    rng: &mut SeededRng,
) -> Result<f64> {
    if trials == 0 {
        return Err(Error::Config("sensitivity_oracle needs trials >= 1".into()));
    }
    if cfg.batch_size >= dataset.len() {
        return Err(Error::Config(
            "sensitivity_oracle needs batch_size < dataset size to form adjacent pairs".into(),
        ));
    }
    let noiseless = DpConfig {
        noise_scale: 0.0,
        ..*cfg
    };
    let mut max_observed: f64 = 0.0;
    for _ in 0..trials {
        let idx = rng.sample_without_replacement(dataset.len(), cfg.batch_size + 1);
        let base: Vec<LabeledExample> =
            idx[..cfg.batch_size].iter().map(|&i| dataset[i].clone()).collect();
        // adjacent batch: swap one element for the held-out draw
        let swap_pos = rng.below(cfg.batch_size);
        let mut adjacent = base.clone();
        adjacent[swap_pos] = dataset[idx[cfg.batch_size]].clone();

        let g = privatize_batch(&per_sample_gradients(model, params, &base)?, &noiseless, rng)?;
        let g_adj =
            privatize_batch(&per_sample_gradients(model, params, &adjacent)?, &noiseless, rng)?;
        max_observed = max_observed.max(g.sub(&g_adj).l2_norm());
    }
    Ok(max_observed)
}
