//! Foundational numerical operations: vector geometry, contrastive loss,
//! maximal linear assignment, linear probes, and clustering agreement.

mod ari;
mod assignment;
mod infonce;
mod probe;
mod vector;

pub use ari::adjusted_rand_index;
pub use assignment::{max_assignment, Assignment, ScoreMatrix};
pub use infonce::{info_nce, info_nce_grad};
pub use probe::{probe_accuracy, probe_loss_and_grad, train_probe, ProbeModel, TrainedProbe};
pub use vector::{cos_sim, dot, FeatureVec};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NumericsError {
    #[error("zero-norm input: degenerate feature")]
    ZeroNorm,
    #[error("non-finite entry in input")]
    NonFinite,
    #[error("vector is not unit-norm (norm = {norm})")]
    NotUnitNorm { norm: f64 },
    #[error("dimension mismatch: {left} vs {right}")]
    DimMismatch { left: usize, right: usize },
    #[error("temperature must be positive, got {tau}")]
    BadTemperature { tau: f64 },
    #[error("at least one negative sample is required")]
    EmptyNegatives,
    #[error("empty dataset")]
    EmptyDataset,
    #[error("label {label} out of range for {num_classes} classes")]
    BadLabel { label: usize, num_classes: usize },
    #[error("learning rate must be positive, got {lr}")]
    BadLearningRate { lr: f64 },
    #[error("need at least 2 items, got {len}")]
    TooFewItems { len: usize },
}
