//! Flat parameter vectors, a seeded-randomness contract, and a small
//! differentiable model family (logistic regression and a two-layer ReLU MLP)
//! with manual backward passes exposing per-sample gradients.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Flat real vector of dimension `d`. Parameters, gradients, and momenta all
/// live here; layers are index ranges into the same buffer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelVector(pub Vec<f64>);

impl ModelVector {
    pub fn zeros(d: usize) -> Self {
        ModelVector(vec![0.0; d])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, i: usize) -> f64 {
        self.0[i]
    }

    pub fn add(&self, other: &ModelVector) -> ModelVector {
        assert_eq!(self.len(), other.len(), "vector length mismatch in add");
        ModelVector(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    pub fn sub(&self, other: &ModelVector) -> ModelVector {
        assert_eq!(self.len(), other.len(), "vector length mismatch in sub");
        ModelVector(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect())
    }

    pub fn scale(&self, c: f64) -> ModelVector {
        ModelVector(self.0.iter().map(|a| a * c).collect())
    }

    pub fn add_assign(&mut self, other: &ModelVector) {
        assert_eq!(self.len(), other.len(), "vector length mismatch in add_assign");
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a += b;
        }
    }

    pub fn axpy(&mut self, c: f64, other: &ModelVector) {
        assert_eq!(self.len(), other.len(), "vector length mismatch in axpy");
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a += c * b;
        }
    }

    pub fn dot(&self, other: &ModelVector) -> f64 {
        assert_eq!(self.len(), other.len(), "vector length mismatch in dot");
        self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum()
    }

    pub fn l2_norm(&self) -> f64 {
        self.0.iter().map(|a| a * a).sum::<f64>().sqrt()
    }

    pub fn all_finite(&self) -> bool {
        self.0.iter().all(|a| a.is_finite())
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Mean of a non-empty set of equal-length vectors.
pub fn mean_vector(vectors: &[ModelVector]) -> ModelVector {
    assert!(!vectors.is_empty(), "mean of empty vector set");
    let mut acc = ModelVector::zeros(vectors[0].len());
    for v in vectors {
        acc.add_assign(v);
    }
    acc.scale(1.0 / vectors.len() as f64)
}

/// One training sample: fixed-length features and a class label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledExample {
    pub features: Vec<f64>,
    pub label: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Architecture {
    Logistic,
    Mlp2,
}

/// Model family descriptor. `hidden_dim` is 0 for logistic regression.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub architecture: Architecture,
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub num_classes: usize,
}

impl ModelSpec {
    pub fn logistic(input_dim: usize, num_classes: usize) -> Self {
        ModelSpec {
            architecture: Architecture::Logistic,
            input_dim,
            hidden_dim: 0,
            num_classes,
        }
    }

    pub fn mlp2(input_dim: usize, hidden_dim: usize, num_classes: usize) -> Self {
        ModelSpec {
            architecture: Architecture::Mlp2,
            input_dim,
            hidden_dim,
            num_classes,
        }
    }

    /// Total flat parameter count d.
    pub fn parameter_count(&self) -> usize {
        match self.architecture {
            Architecture::Logistic => self.num_classes * (self.input_dim + 1),
            Architecture::Mlp2 => {
                self.hidden_dim * (self.input_dim + 1)
                    + self.num_classes * (self.hidden_dim + 1)
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.num_classes < 2 {
            return Err(Error::Config(format!(
                "model needs input_dim > 0 and num_classes >= 2, got {}/{}",
                self.input_dim, self.num_classes
            )));
        }
        match self.architecture {
            Architecture::Logistic if self.hidden_dim != 0 => Err(Error::Config(
                "logistic model must have hidden_dim = 0".into(),
            )),
            Architecture::Mlp2 if self.hidden_dim == 0 => {
                Err(Error::Config("mlp2 model needs hidden_dim > 0".into()))
            }
            _ => Ok(()),
        }
    }
}

fn check_params(model: &ModelSpec, params: &ModelVector) -> Result<()> {
    let d = model.parameter_count();
    if params.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: params.len(),
        });
    }
    Ok(())
}

/// Softmax cross-entropy with the row max subtracted before exponentiation.
fn log_softmax(logits: &[f64]) -> (Vec<f64>, f64) {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let sum_exp: f64 = logits.iter().map(|z| (z - max).exp()).sum();
    let lse = max + sum_exp.ln();
    let probs = logits.iter().map(|z| (z - lse).exp()).collect();
    (probs, lse)
}

struct Forward {
    probs: Vec<f64>,
    loss: f64,
    // mlp2 intermediates; empty for logistic
    hidden_pre: Vec<f64>,
    hidden_post: Vec<f64>,
}

fn forward(model: &ModelSpec, params: &ModelVector, example: &LabeledExample) -> Forward {
    let p = params.as_slice();
    let x = &example.features;
    assert_eq!(x.len(), model.input_dim, "feature length mismatch");
    match model.architecture {
        Architecture::Logistic => {
            let c = model.num_classes;
            let i = model.input_dim;
            let mut logits = vec![0.0; c];
            for class in 0..c {
                let row = &p[class * i..(class + 1) * i];
                let bias = p[c * i + class];
                logits[class] = bias + row.iter().zip(x).map(|(w, xi)| w * xi).sum::<f64>();
            }
            let (probs, lse) = log_softmax(&logits);
            let loss = lse - logits[example.label];
            Forward {
                probs,
                loss,
                hidden_pre: Vec::new(),
                hidden_post: Vec::new(),
            }
        }
        Architecture::Mlp2 => {
            let (h, i, c) = (model.hidden_dim, model.input_dim, model.num_classes);
            let w1 = &p[0..h * i];
            let b1 = &p[h * i..h * i + h];
            let w2 = &p[h * i + h..h * i + h + c * h];
            let b2 = &p[h * i + h + c * h..];
            let mut hidden_pre = vec![0.0; h];
            for j in 0..h {
                hidden_pre[j] =
                    b1[j] + w1[j * i..(j + 1) * i].iter().zip(x).map(|(w, xi)| w * xi).sum::<f64>();
            }
            // ReLU; derivative at exactly 0 taken as 0
            let hidden_post: Vec<f64> = hidden_pre.iter().map(|z| z.max(0.0)).collect();
            let mut logits = vec![0.0; c];
            for class in 0..c {
                logits[class] = b2[class]
                    + w2[class * h..(class + 1) * h]
                        .iter()
                        .zip(&hidden_post)
                        .map(|(w, hj)| w * hj)
                        .sum::<f64>();
            }
            let (probs, lse) = log_softmax(&logits);
            let loss = lse - logits[example.label];
            Forward {
                probs,
                loss,
                hidden_pre,
                hidden_post,
            }
        }
    }
}

fn backward(model: &ModelSpec, params: &ModelVector, example: &LabeledExample) -> ModelVector {
    let fwd = forward(model, params, example);
    let x = &example.features;
    let mut dlogits = fwd.probs;
    dlogits[example.label] -= 1.0;
    let mut grad = vec![0.0; model.parameter_count()];
    match model.architecture {
        Architecture::Logistic => {
            let c = model.num_classes;
            let i = model.input_dim;
            for class in 0..c {
                for (col, xi) in x.iter().enumerate() {
                    grad[class * i + col] = dlogits[class] * xi;
                }
                grad[c * i + class] = dlogits[class];
            }
        }
        Architecture::Mlp2 => {
            let (h, i, c) = (model.hidden_dim, model.input_dim, model.num_classes);
            let p = params.as_slice();
            let w2 = &p[h * i + h..h * i + h + c * h];
            let w2_off = h * i + h;
            let b2_off = w2_off + c * h;
            for class in 0..c {
                for j in 0..h {
                    grad[w2_off + class * h + j] = dlogits[class] * fwd.hidden_post[j];
                }
                grad[b2_off + class] = dlogits[class];
            }
            for j in 0..h {
                if fwd.hidden_pre[j] <= 0.0 {
                    continue;
                }
                let dh: f64 = (0..c).map(|class| w2[class * h + j] * dlogits[class]).sum();
                for (col, xi) in x.iter().enumerate() {
                    grad[j * i + col] = dh * xi;
                }
                grad[h * i + j] = dh;
            }
        }
    }
    ModelVector(grad)
}

/// Exact analytic per-sample cross-entropy gradients, one per example.
pub fn per_sample_gradients(
    model: &ModelSpec,
    params: &ModelVector,
    batch: &[LabeledExample],
) -> Result<Vec<ModelVector>> {
    check_params(model, params)?;
    if batch.is_empty() {
        return Err(Error::EmptyInput("per_sample_gradients batch"));
    }
    Ok(batch.iter().map(|ex| backward(model, params, ex)).collect())
}

/// Per-sample loss, exposed for independent re-summation oracles.
pub fn sample_loss(model: &ModelSpec, params: &ModelVector, example: &LabeledExample) -> f64 {
    forward(model, params, example).loss
}

/// Mean cross-entropy loss and argmax accuracy over a dataset.
pub fn loss_and_accuracy(
    model: &ModelSpec,
    params: &ModelVector,
    data: &[LabeledExample],
) -> Result<(f64, f64)> {
    check_params(model, params)?;
    if data.is_empty() {
        return Err(Error::EmptyInput("loss_and_accuracy data"));
    }
    let mut loss_sum = 0.0;
    let mut correct = 0usize;
    for ex in data {
        let fwd = forward(model, params, ex);
        loss_sum += fwd.loss;
        let argmax = fwd
            .probs
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .map(|(i, _)| i)
            .unwrap();
        if argmax == ex.label {
            correct += 1;
        }
    }
    Ok((loss_sum / data.len() as f64, correct as f64 / data.len() as f64))
}
