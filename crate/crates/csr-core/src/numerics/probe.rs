//! Multinomial logistic-regression probe trained by full-batch gradient descent.

use serde::{Deserialize, Serialize};

use super::vector::FeatureVec;
use super::NumericsError;

/// Linear probe: per-class weight rows plus bias.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProbeModel {
    /// num_classes × feature_dim
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
}

impl ProbeModel {
    pub fn zeros(num_classes: usize, dim: usize) -> Self {
        ProbeModel {
            weights: vec![vec![0.0; dim]; num_classes],
            bias: vec![0.0; num_classes],
        }
    }

    pub fn num_classes(&self) -> usize {
        self.bias.len()
    }

    fn logits(&self, x: &[f64]) -> Vec<f64> {
        self.weights
            .iter()
            .zip(&self.bias)
            .map(|(w, b)| b + w.iter().zip(x).map(|(wi, xi)| wi * xi).sum::<f64>())
            .collect()
    }

    /// Argmax prediction; ties break to the lowest class id.
    pub fn predict(&self, x: &[f64]) -> usize {
        let logits = self.logits(x);
        let mut best = 0;
        for (c, &v) in logits.iter().enumerate() {
            if v > logits[best] {
                best = c;
            }
        }
        best
    }
}

/// Result of probe training: final model plus the loss trace.
#[derive(Debug, Clone)]
pub struct TrainedProbe {
    pub model: ProbeModel,
    pub loss_per_epoch: Vec<f64>,
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|v| (v - m).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.iter().map(|e| e / z).collect()
}

fn check_dataset(
    features: &[FeatureVec],
    labels: &[usize],
    num_classes: usize,
) -> Result<usize, NumericsError> {
    if features.is_empty() {
        return Err(NumericsError::EmptyDataset);
    }
    if features.len() != labels.len() {
        return Err(NumericsError::DimMismatch {
            left: features.len(),
            right: labels.len(),
        });
    }
    let dim = features[0].dim();
    if features.iter().any(|f| f.dim() != dim) {
        return Err(NumericsError::DimMismatch { left: dim, right: 0 });
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
        return Err(NumericsError::BadLabel {
            label: bad,
            num_classes,
        });
    }
    Ok(dim)
}

/// Mean cross-entropy over the dataset and its gradient with respect to
/// weights and bias.
pub fn probe_loss_and_grad(
    model: &ProbeModel,
    features: &[FeatureVec],
    labels: &[usize],
) -> Result<(f64, Vec<Vec<f64>>, Vec<f64>), NumericsError> {
    let num_classes = model.num_classes();
    let dim = check_dataset(features, labels, num_classes)?;
    let n = features.len() as f64;
    let mut loss = 0.0;
    let mut grad_w = vec![vec![0.0; dim]; num_classes];
    let mut grad_b = vec![0.0; num_classes];
    for (x, &y) in features.iter().zip(labels) {
        let p = softmax(&model.logits(x.as_slice()));
        loss -= p[y].max(1e-300).ln();
        for c in 0..num_classes {
            let err = p[c] - if c == y { 1.0 } else { 0.0 };
            grad_b[c] += err / n;
            for (g, xi) in grad_w[c].iter_mut().zip(x.as_slice()) {
                *g += err * xi / n;
            }
        }
    }
    Ok((loss / n, grad_w, grad_b))
}

/// Fits a linear probe by full-batch gradient descent from a zero init.
pub fn train_probe(
    features: &[FeatureVec],
    labels: &[usize],
    num_classes: usize,
    lr: f64,
    epochs: usize,
) -> Result<TrainedProbe, NumericsError> {
    if lr <= 0.0 || !lr.is_finite() {
        return Err(NumericsError::BadLearningRate { lr });
    }
    let dim = check_dataset(features, labels, num_classes)?;
    let mut model = ProbeModel::zeros(num_classes, dim);
    let mut loss_per_epoch = Vec::with_capacity(epochs);
    for _ in 0..epochs {
        let (loss, grad_w, grad_b) = probe_loss_and_grad(&model, features, labels)?;
        loss_per_epoch.push(loss);
        for c in 0..num_classes {
            model.bias[c] -= lr * grad_b[c];
            for (w, g) in model.weights[c].iter_mut().zip(&grad_w[c]) {
                *w -= lr * g;
            }
        }
    }
    Ok(TrainedProbe {
        model,
        loss_per_epoch,
    })
}

/// Fraction of argmax predictions matching the labels.
pub fn probe_accuracy(
    model: &ProbeModel,
    features: &[FeatureVec],
    labels: &[usize],
) -> Result<f64, NumericsError> {
    check_dataset(features, labels, model.num_classes())?;
    let correct = features
        .iter()
        .zip(labels)
        .filter(|(x, &y)| model.predict(x.as_slice()) == y)
        .count();
    Ok(correct as f64 / features.len() as f64)
}
