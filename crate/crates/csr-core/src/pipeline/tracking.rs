//! Tracking as online clustering: per frame, detections either join an
//! existing cluster by feature similarity or spawn a new one.

use serde::{Deserialize, Serialize};

use crate::csr::merge_feature;
use crate::encoder::{Encoder, EncoderConfig};
use crate::numerics::{
    adjusted_rand_index, cos_sim, max_assignment, FeatureVec, ScoreMatrix,
};
use crate::world::EntityId;

use super::PipelineError;

/// One frame of detections. Truth labels ride along for evaluation only.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrackFrame {
    pub features: Vec<FeatureVec>,
    pub labels: Vec<usize>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct TrackStream {
    pub frames: Vec<TrackFrame>,
}

/// Clusters the stream frame by frame and scores the result against the
/// hidden labels. Returns per-frame cluster assignments and the ARI.
///
/// With `update` set, a cluster's feature is the running mean of its
/// members; otherwise it stays fixed at the founding detection.
pub fn run_tracking(
    stream: &TrackStream,
    node_threshold: f64,
    update: bool,
) -> Result<(Vec<Vec<usize>>, f64), PipelineError> {
    if stream.frames.is_empty() || stream.frames.iter().all(|f| f.features.is_empty()) {
        return Err(PipelineError::EmptyStream);
    }

    let mut clusters: Vec<(FeatureVec, u32)> = Vec::new();
    let mut assignments: Vec<Vec<usize>> = Vec::new();
    for frame in &stream.frames {
        let mut frame_assignment = vec![usize::MAX; frame.features.len()];
        if !clusters.is_empty() && !frame.features.is_empty() {
            let mut scores = Vec::with_capacity(clusters.len() * frame.features.len());
            for (feat, _) in &clusters {
                for det in &frame.features {
                    scores.push(cos_sim(feat, det)?);
                }
            }
            let matrix = ScoreMatrix::new(clusters.len(), frame.features.len(), scores)?;
            for (row, col) in max_assignment(&matrix)?.pairs {
                if matrix.get(row, col) > node_threshold {
                    frame_assignment[col] = row;
                    if update {
                        let (feat, count) = &mut clusters[row];
                        *feat = merge_feature(feat, *count, &frame.features[col])?;
                        *count += 1;
                    }
                }
            }
        }
        for (col, slot) in frame_assignment.iter_mut().enumerate() {
            if *slot == usize::MAX {
                *slot = clusters.len();
                clusters.push((frame.features[col].clone(), 1));
            }
        }
        assignments.push(frame_assignment);
    }

    let pred: Vec<usize> = assignments.iter().flatten().copied().collect();
    let truth: Vec<usize> = stream.frames.iter().flat_map(|f| f.labels.clone()).collect();
    let ari = adjusted_rand_index(&pred, &truth)?;
    Ok((assignments, ari))
}

/// Synthetic stream: `num_objects` persistent identities re-observed over
/// `num_frames` noisy views; each frame drops a pseudo-random subset to
/// mimic partial visibility.
pub fn make_track_stream(
    num_objects: u32,
    num_frames: usize,
    sigma: f64,
    seed: u64,
) -> Result<TrackStream, PipelineError> {
    use rand::{Rng, SeedableRng};
    let encoder = Encoder::new(EncoderConfig {
        sigma,
        seed,
        ..EncoderConfig::default()
    })?;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ 0x7261_636b);
    let mut frames = Vec::with_capacity(num_frames);
    for frame in 0..num_frames {
        let mut features = Vec::new();
        let mut labels = Vec::new();
        for obj in 0..num_objects {
            // Everyone appears in the first frame so all tracks get founded;
            // afterwards each object is visible ~70% of the time.
            if frame > 0 && rng.gen_bool(0.3) {
                continue;
            }
            let mut noise =
                rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ (frame as u64) << 32 ^ obj as u64);
            features.push(encoder.identity_feature(EntityId::Object(obj), Some(&mut noise)));
            labels.push(obj as usize);
        }
        frames.push(TrackFrame { features, labels });
    }
    Ok(TrackStream { frames })
}
