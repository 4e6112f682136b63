//! Linear softmax classifier over `C + 1` outputs (base classes plus the
//! unified novel class), trained by full-batch gradient descent on weighted
//! cross entropy.
//!
//! Class indices here are 0-based output slots: label `ℓ` lives at `ℓ - 1`.

use crate::error::{Error, Result};
use crate::numerics::FeatureVector;

pub const DEFAULT_LEARNING_RATE: f64 = 0.5;
/// Weight on the novel-class loss from selected source candidates.
pub const DEFAULT_NOVEL_LOSS_WEIGHT: f64 = 1e-4;
/// Weight on the adaptive loss from pseudo-labelled target features.
pub const DEFAULT_ADAPTIVE_LOSS_WEIGHT: f64 = 1e-1;

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeClassifier {
    classes: usize,
    dim: usize,
    /// Row-major `classes x dim`.
    weights: Vec<f64>,
    biases: Vec<f64>,
    pub learning_rate: f64,
    pub loss_weight_novel: f64,
    pub loss_weight_adaptive: f64,
}

/// Parameter gradient, same layout as the probe.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl ProbeClassifier {
    /// All-zero probe: every input maps to the uniform distribution.
    pub fn zeros(classes: usize, dim: usize, learning_rate: f64) -> Result<Self> {
        if classes < 2 || dim == 0 {
            return Err(Error::InvalidConfig(format!(
                "probe needs >= 2 classes and dim >= 1, got {classes} x {dim}"
            )));
        }
        if !(learning_rate > 0.0) {
            return Err(Error::InvalidConfig("learning rate must be positive".into()));
        }
        Ok(Self {
            classes,
            dim,
            weights: vec![0.0; classes * dim],
            biases: vec![0.0; classes],
            learning_rate,
            loss_weight_novel: DEFAULT_NOVEL_LOSS_WEIGHT,
            loss_weight_adaptive: DEFAULT_ADAPTIVE_LOSS_WEIGHT,
        })
    }

    pub fn from_parameters(
        classes: usize,
        dim: usize,
        weights: Vec<f64>,
        biases: Vec<f64>,
        learning_rate: f64,
    ) -> Result<Self> {
        let mut probe = Self::zeros(classes, dim, learning_rate)?;
        if weights.len() != classes * dim || biases.len() != classes {
            return Err(Error::LengthMismatch {
                left: weights.len() + biases.len(),
                right: classes * dim + classes,
            });
        }
        if weights.iter().chain(&biases).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        probe.weights = weights;
        probe.biases = biases;
        Ok(probe)
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn biases(&self) -> &[f64] {
        &self.biases
    }

    fn logits(&self, v: &FeatureVector) -> Result<Vec<f64>> {
        if v.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: v.dim(),
            });
        }
        Ok(self
            .weights
            .chunks_exact(self.dim)
            .zip(&self.biases)
            .map(|(row, b)| row.iter().zip(v.iter()).map(|(w, x)| w * x).sum::<f64>() + b)
            .collect())
    }

    /// `softmax(W v + b)`, stabilized by subtracting the max logit.
    pub fn forward_probs(&self, v: &FeatureVector) -> Result<Vec<f64>> {
        Ok(softmax(&self.logits(v)?))
    }

    /// Most probable output slot, ties to the lowest index.
    pub fn predict(&self, v: &FeatureVector) -> Result<usize> {
        let logits = self.logits(v)?;
        let mut best = 0;
        for (i, z) in logits.iter().enumerate() {
            if *z > logits[best] {
                best = i;
            }
        }
        Ok(best)
    }

    /// `weight * mean(-log p[label])` over the batch.
    pub fn loss(&self, features: &[FeatureVector], labels: &[usize], weight: f64) -> Result<f64> {
        self.check_batch(features, labels)?;
        let mut total = 0.0;
        for (v, &y) in features.iter().zip(labels) {
            let z = self.logits(v)?;
            total += log_sum_exp(&z) - z[y];
        }
        Ok(weight * total / features.len() as f64)
    }

    /// Analytic gradient of [`Self::loss`].
    pub fn gradient(&self, features: &[FeatureVector], labels: &[usize], weight: f64) -> Result<Gradient> {
        self.check_batch(features, labels)?;
        let scale = weight / features.len() as f64;
        let mut grad = Gradient {
            weights: vec![0.0; self.weights.len()],
            biases: vec![0.0; self.classes],
        };
        for (v, &y) in features.iter().zip(labels) {
            let probs = self.forward_probs(v)?;
            for (k, p) in probs.iter().enumerate() {
                let delta = scale * (p - if k == y { 1.0 } else { 0.0 });
                grad.biases[k] += delta;
                let row = &mut grad.weights[k * self.dim..(k + 1) * self.dim];
                for (g, x) in row.iter_mut().zip(v.iter()) {
                    *g += delta * x;
                }
            }
        }
        Ok(grad)
    }

    /// One gradient-descent step on `weight * mean cross entropy`.
    pub fn sgd_step(&self, features: &[FeatureVector], labels: &[usize], weight: f64) -> Result<Self> {
        let grad = self.gradient(features, labels, weight)?;
        let mut next = self.clone();
        for (w, g) in next.weights.iter_mut().zip(&grad.weights) {
            *w -= self.learning_rate * g;
        }
        for (b, g) in next.biases.iter_mut().zip(&grad.biases) {
            *b -= self.learning_rate * g;
        }
        Ok(next)
    }

    fn check_batch(&self, features: &[FeatureVector], labels: &[usize]) -> Result<()> {
        if features.is_empty() {
            return Err(Error::EmptyBatch);
        }
        if features.len() != labels.len() {
            return Err(Error::LengthMismatch {
                left: features.len(),
                right: labels.len(),
            });
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= self.classes) {
            return Err(Error::LabelOutOfRange {
                label: bad,
                classes: self.classes,
            });
        }
        Ok(())
    }

    /// Mutable access to the flat parameter vector (weights then biases),
    /// used for finite-difference checks.
    pub fn parameter_mut(&mut self, index: usize) -> &mut f64 {
        if index < self.weights.len() {
            &mut self.weights[index]
        } else {
            &mut self.biases[index - self.weights.len()]
        }
    }

    pub fn num_parameters(&self) -> usize {
        self.weights.len() + self.biases.len()
    }
}

fn log_sum_exp(z: &[f64]) -> f64 {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

pub fn softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// `-ln probs[label]`.
pub fn cross_entropy(probs: &[f64], label: usize) -> Result<f64> {
    let p = probs.get(label).ok_or(Error::LabelOutOfRange {
        label,
        classes: probs.len(),
    })?;
    Ok(-p.ln())
}
