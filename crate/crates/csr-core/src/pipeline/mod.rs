//! End-to-end tasks and metrics: two-phase rearrangement, tracking as
//! clustering, triplet retrieval, and linear-probe dataset generation.

mod metrics;
mod probes;
mod rearrange;
mod retrieval;
mod tracking;

pub use metrics::{energy_metric, fixed_strict_metric, success_metric};
pub use probes::{build_probe_dataset, ProbeDataset, ProbeTask};
pub use rearrange::{run_rearrangement, EpisodeMetrics};
pub use retrieval::{
    make_random_triplets, make_retrieval_triplets, run_retrieval, Triplet,
};
pub use tracking::{make_track_stream, run_tracking, TrackFrame, TrackStream};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::csr::CsrError;
use crate::embodied::EmbodiedError;
use crate::encoder::{EncoderConfig, EncoderError};
use crate::numerics::NumericsError;
use crate::world::{SceneConfig, WorldError};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    World(#[from] WorldError),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error(transparent)]
    Csr(#[from] CsrError),
    #[error(transparent)]
    Embodied(#[from] EmbodiedError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error("threshold {name} = {value} outside [-1, 1]")]
    BadThreshold { name: &'static str, value: f64 },
    #[error("shuffle k = {0} outside [1, 5]")]
    BadShuffleK(usize),
    #[error("ground-truth boxes are the only supported detection mode")]
    EstimatedBoxesUnsupported,
    #[error("object id sets differ between scenes")]
    IdMismatch,
    #[error("unknown object {0} in touched set")]
    UnknownTouched(u32),
    #[error("empty track stream")]
    EmptyStream,
    #[error("no triplets provided")]
    NoTriplets,
    #[error("triplet {index} malformed: {reason}")]
    MalformedTriplet { index: usize, reason: String },
    #[error("probe class {0:?} has no examples")]
    EmptyProbeClass(String),
    #[error("need at least 2 scenes to split train/test, got {0}")]
    TooFewScenes(usize),
}

/// Similarity thresholds for matching, correspondence, and move flagging.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Thresholds {
    /// Within-trajectory node merge threshold.
    pub node: f64,
    /// Cross-trajectory identity correspondence threshold.
    pub object: f64,
    /// Scene-similarity floor below which a correspondence is flagged moved.
    pub moved: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            node: 0.5,
            object: 0.4,
            moved: 0.8,
        }
    }
}

impl Thresholds {
    pub fn validate(&self) -> Result<(), PipelineError> {
        for (name, value) in [
            ("node", self.node),
            ("object", self.object),
            ("moved", self.moved),
        ] {
            if !(-1.0..=1.0).contains(&value) || value.is_nan() {
                return Err(PipelineError::BadThreshold { name, value });
            }
        }
        Ok(())
    }
}

/// Full configuration of one rearrangement episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpisodeConfig {
    pub scene: SceneConfig,
    /// Number of objects the shuffle relocates.
    pub shuffle_k: usize,
    pub encoder: EncoderConfig,
    pub thresholds: Thresholds,
    /// Replace estimated cross-trajectory matching with instance-id equality.
    pub gt_matching: bool,
    /// Detections come from the simulator; estimated boxes are out of scope.
    pub gt_boxes: bool,
    /// Explore only the shuffled objects' locations instead of full coverage.
    pub heuristic_trajectory: bool,
    pub seed: u64,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        EpisodeConfig {
            scene: SceneConfig::default(),
            shuffle_k: 3,
            encoder: EncoderConfig::default(),
            thresholds: Thresholds::default(),
            gt_matching: false,
            gt_boxes: true,
            heuristic_trajectory: true,
            seed: 0,
        }
    }
}

impl EpisodeConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        self.thresholds.validate()?;
        if !(1..=5).contains(&self.shuffle_k) {
            return Err(PipelineError::BadShuffleK(self.shuffle_k));
        }
        if !self.gt_boxes {
            return Err(PipelineError::EstimatedBoxesUnsupported);
        }
        Ok(())
    }
}
