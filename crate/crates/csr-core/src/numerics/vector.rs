//! Unit-norm feature vectors and cosine geometry.

use serde::{Deserialize, Serialize};

use super::NumericsError;

/// An L2-normalized feature vector.
///
/// All features stored in a scene graph are unit-norm; the constructor
/// enforces this so downstream cosine similarities are plain dot products.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVec(Vec<f64>);

impl FeatureVec {
    /// Normalizes a raw vector to unit L2 norm.
    pub fn normalize(raw: &[f64]) -> Result<FeatureVec, NumericsError> {
        if raw.iter().any(|x| !x.is_finite()) {
            return Err(NumericsError::NonFinite);
        }
        let norm = raw.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm <= 0.0 || !norm.is_finite() {
            return Err(NumericsError::ZeroNorm);
        }
        Ok(FeatureVec(raw.iter().map(|x| x / norm).collect()))
    }

    /// Wraps a vector that is already unit-norm (within 1e-9).
    pub fn from_unit(values: Vec<f64>) -> Result<FeatureVec, NumericsError> {
        let norm = values.iter().map(|x| x * x).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > 1e-9 {
            return Err(NumericsError::NotUnitNorm { norm });
        }
        Ok(FeatureVec(values))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

/// Dot product of two equal-length slices.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Cosine similarity between two unit-norm features.
pub fn cos_sim(a: &FeatureVec, b: &FeatureVec) -> Result<f64, NumericsError> {
    if a.dim() != b.dim() {
        return Err(NumericsError::DimMismatch {
            left: a.dim(),
            right: b.dim(),
        });
    }
    Ok(dot(a.as_slice(), b.as_slice()))
}
