//! Triplet retrieval: given a query pair feature, pick between a positive
//! view of the same layout and a negative view where one object has moved.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::encoder::{Encoder, EncoderConfig};
use crate::numerics::{cos_sim, FeatureVec};
use crate::world::{generate_scene, shuffle, EntityId, SceneConfig};

use super::PipelineError;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Triplet {
    pub query: FeatureVec,
    pub positive: FeatureVec,
    pub negative: FeatureVec,
}

/// Fraction of triplets where the query is closer to the positive.
pub fn run_retrieval(triplets: &[Triplet]) -> Result<f64, PipelineError> {
    if triplets.is_empty() {
        return Err(PipelineError::NoTriplets);
    }
    let mut correct = 0usize;
    for (index, t) in triplets.iter().enumerate() {
        if t.query.dim() != t.positive.dim() || t.query.dim() != t.negative.dim() {
            return Err(PipelineError::MalformedTriplet {
                index,
                reason: "dimension mismatch".into(),
            });
        }
        if cos_sim(&t.query, &t.positive)? > cos_sim(&t.query, &t.negative)? {
            correct += 1;
        }
    }
    Ok(correct as f64 / triplets.len() as f64)
}

/// Builds seeded triplets: the query and positive are two noisy views of an
/// object-receptacle pair, the negative is the same pair after that object
/// moved to a different receptacle.
pub fn make_retrieval_triplets(
    count: usize,
    sigma: f64,
    seed: u64,
) -> Result<Vec<Triplet>, PipelineError> {
    let encoder = Encoder::new(EncoderConfig {
        sigma,
        seed,
        ..EncoderConfig::default()
    })?;
    let mut out = Vec::with_capacity(count);
    let mut index = 0u64;
    while out.len() < count {
        let scene_seed = seed ^ (index << 8);
        index += 1;
        let Ok(scene) = generate_scene(&SceneConfig::default(), scene_seed) else {
            continue;
        };
        let Ok((moved_scene, moved)) = shuffle(&scene, 1, scene_seed ^ 0x6e65_67) else {
            continue;
        };
        let m = &moved[0];
        let i = EntityId::Object(m.id);
        let j = EntityId::Receptacle(m.from);
        let view = |scene, salt: u64| -> Result<FeatureVec, PipelineError> {
            let mut rng = ChaCha8Rng::seed_from_u64(scene_seed ^ salt);
            Ok(encoder.pair_feature(scene, i, j, Some(&mut rng))?)
        };
        out.push(Triplet {
            query: view(&scene, 0x51)?,
            positive: view(&scene, 0x50)?,
            negative: view(&moved_scene, 0x4e)?,
        });
    }
    Ok(out)
}

/// Chance baseline: triplets of independent random unit vectors.
pub fn make_random_triplets(count: usize, dim: usize, seed: u64) -> Vec<Triplet> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let unit = |rng: &mut ChaCha8Rng| {
        let raw: Vec<f64> = (0..dim)
            .map(|_| {
                // Box-Muller from two uniforms.
                let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
                let u2: f64 = rng.gen();
                (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
            })
            .collect();
        FeatureVec::normalize(&raw).expect("gaussian vector is nonzero")
    };
    (0..count)
        .map(|_| Triplet {
            query: unit(&mut rng),
            positive: unit(&mut rng),
            negative: unit(&mut rng),
        })
        .collect()
}
