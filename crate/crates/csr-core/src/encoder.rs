//! Seeded oracle relational encoder: maps entity pairs to unit features
//! that are consistent across views of a static layout, separated across
//! relationships, and linearly decodable for spatial-relation labels.
//! Stands in for a trained contrastive encoder.

use std::collections::HashMap;
use std::sync::Mutex;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::csr::{LocalGraph, LocalNode};
use crate::numerics::FeatureVec;
use crate::world::{Detection, EntityId, Observation, Scene};

/// Weight of the relation-bucket component relative to the identity
/// projections. Keeps same-pair features under 0.5 cosine once the bucket
/// changes (2 shared of 2² + 1 + 1 component norms).
const BUCKET_WEIGHT: f64 = 2.0;

/// Displacements are clamped to this many cells per axis.
pub const DISPLACEMENT_CLAMP: i32 = 3;

#[derive(Debug, Error)]
pub enum EncoderError {
    #[error("unknown entity {0:?}")]
    UnknownEntity(EntityId),
    #[error("feature dimension must be positive")]
    BadDimension,
    #[error("noise scale must be non-negative, got {0}")]
    BadSigma(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncoderConfig {
    /// Feature dimension L.
    pub dim: usize,
    /// View-noise scale σ ≥ 0.
    pub sigma: f64,
    pub seed: u64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            dim: 512,
            sigma: 0.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RelationKind {
    /// i is the receptacle supporting object j.
    Supports,
    /// Object i sits on receptacle j.
    SupportedBy,
    /// Two objects on the same receptacle.
    Sibling,
    /// Any other pair.
    CrossReceptacle,
}

/// Discrete ground-truth relation context a pair feature encodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RelationBucket {
    /// Self pair of an object: where it currently sits.
    NodeObject { receptacle: u32, offset: u32 },
    /// Self pair of a receptacle.
    NodeReceptacle { receptacle: u32 },
    /// Directed pair context with a clamped cell displacement.
    Edge {
        kind: RelationKind,
        dx: i32,
        dy: i32,
    },
}

fn entity_cell(scene: &Scene, entity: EntityId) -> Result<(i32, i32), EncoderError> {
    match entity {
        EntityId::Receptacle(r) => scene
            .receptacle(r)
            .map(|rec| rec.cell)
            .ok_or(EncoderError::UnknownEntity(entity)),
        EntityId::Object(o) => {
            let placed = scene.object(o).ok_or(EncoderError::UnknownEntity(entity))?;
            scene
                .receptacle(placed.receptacle)
                .map(|rec| rec.cell)
                .ok_or(EncoderError::UnknownEntity(entity))
        }
    }
}

/// Ground-truth relation bucket for an ordered entity pair in a scene.
pub fn relation_bucket(
    scene: &Scene,
    i: EntityId,
    j: EntityId,
) -> Result<RelationBucket, EncoderError> {
    if i == j {
        return Ok(match i {
            EntityId::Object(o) => {
                let placed = scene.object(o).ok_or(EncoderError::UnknownEntity(i))?;
                RelationBucket::NodeObject {
                    receptacle: placed.receptacle,
                    offset: placed.offset,
                }
            }
            EntityId::Receptacle(r) => {
                scene.receptacle(r).ok_or(EncoderError::UnknownEntity(i))?;
                RelationBucket::NodeReceptacle { receptacle: r }
            }
        });
    }

    let kind = match (i, j) {
        (EntityId::Receptacle(r), EntityId::Object(o)) => {
            let placed = scene.object(o).ok_or(EncoderError::UnknownEntity(j))?;
            if placed.receptacle == r {
                RelationKind::Supports
            } else {
                RelationKind::CrossReceptacle
            }
        }
        (EntityId::Object(o), EntityId::Receptacle(r)) => {
            let placed = scene.object(o).ok_or(EncoderError::UnknownEntity(i))?;
            if placed.receptacle == r {
                RelationKind::SupportedBy
            } else {
                RelationKind::CrossReceptacle
            }
        }
        (EntityId::Object(a), EntityId::Object(b)) => {
            let pa = scene.object(a).ok_or(EncoderError::UnknownEntity(i))?;
            let pb = scene.object(b).ok_or(EncoderError::UnknownEntity(j))?;
            if pa.receptacle == pb.receptacle {
                RelationKind::Sibling
            } else {
                RelationKind::CrossReceptacle
            }
        }
        (EntityId::Receptacle(_), EntityId::Receptacle(_)) => RelationKind::CrossReceptacle,
    };
    let ci = entity_cell(scene, i)?;
    let cj = entity_cell(scene, j)?;
    Ok(RelationBucket::Edge {
        kind,
        dx: (cj.0 - ci.0).clamp(-DISPLACEMENT_CLAMP, DISPLACEMENT_CLAMP),
        dy: (cj.1 - ci.1).clamp(-DISPLACEMENT_CLAMP, DISPLACEMENT_CLAMP),
    })
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e3779b97f4a7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d049bb133111eb);
    x ^ (x >> 31)
}

fn entity_tag(entity: EntityId) -> u64 {
    match entity {
        EntityId::Object(o) => fnv1a(&[b'o', (o >> 24) as u8, (o >> 16) as u8, (o >> 8) as u8, o as u8]),
        EntityId::Receptacle(r) => {
            fnv1a(&[b'r', (r >> 24) as u8, (r >> 16) as u8, (r >> 8) as u8, r as u8])
        }
    }
}

fn bucket_tag(bucket: &RelationBucket) -> u64 {
    let mut bytes = Vec::with_capacity(16);
    match bucket {
        RelationBucket::NodeObject { receptacle, offset } => {
            bytes.push(0);
            bytes.extend_from_slice(&receptacle.to_le_bytes());
            bytes.extend_from_slice(&offset.to_le_bytes());
        }
        RelationBucket::NodeReceptacle { receptacle } => {
            bytes.push(1);
            bytes.extend_from_slice(&receptacle.to_le_bytes());
        }
        RelationBucket::Edge { kind, dx, dy } => {
            bytes.push(2);
            bytes.push(match kind {
                RelationKind::Supports => 0,
                RelationKind::SupportedBy => 1,
                RelationKind::Sibling => 2,
                RelationKind::CrossReceptacle => 3,
            });
            bytes.extend_from_slice(&dx.to_le_bytes());
            bytes.extend_from_slice(&dy.to_le_bytes());
        }
    }
    fnv1a(&bytes)
}

/// Standard normal draws via Box-Muller.
fn gaussians(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
        let u2: f64 = rng.gen::<f64>();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        out.push(r * theta.cos());
        if out.len() < n {
            out.push(r * theta.sin());
        }
    }
    out
}

/// Oracle relational encoder with seeded projection matrices and caches
/// for per-entity and per-bucket component vectors.
pub struct Encoder {
    config: EncoderConfig,
    /// L×L projections applied to the first and second identity, row-major.
    p: Vec<f64>,
    q: Vec<f64>,
    identity_cache: Mutex<HashMap<EntityId, Vec<f64>>>,
    projected_cache: Mutex<HashMap<(u8, EntityId), Vec<f64>>>,
    bucket_cache: Mutex<HashMap<RelationBucket, Vec<f64>>>,
}

impl Encoder {
    pub fn new(config: EncoderConfig) -> Result<Encoder, EncoderError> {
        if config.dim == 0 {
            return Err(EncoderError::BadDimension);
        }
        if !(config.sigma >= 0.0) {
            return Err(EncoderError::BadSigma(config.sigma));
        }
        let l = config.dim;
        let scale = 1.0 / (l as f64).sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(splitmix(config.seed ^ fnv1a(b"projections")));
        let p: Vec<f64> = gaussians(&mut rng, l * l).into_iter().map(|g| g * scale).collect();
        let q: Vec<f64> = gaussians(&mut rng, l * l).into_iter().map(|g| g * scale).collect();
        Ok(Encoder {
            config,
            p,
            q,
            identity_cache: Mutex::new(HashMap::new()),
            projected_cache: Mutex::new(HashMap::new()),
            bucket_cache: Mutex::new(HashMap::new()),
        })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    fn seeded_unit(&self, tag: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(splitmix(self.config.seed ^ tag));
        let raw = gaussians(&mut rng, self.config.dim);
        let norm = raw.iter().map(|x| x * x).sum::<f64>().sqrt();
        raw.into_iter().map(|x| x / norm).collect()
    }

    fn identity_raw(&self, entity: EntityId) -> Vec<f64> {
        if let Some(v) = self.identity_cache.lock().unwrap().get(&entity) {
            return v.clone();
        }
        let v = self.seeded_unit(entity_tag(entity) ^ fnv1a(b"identity"));
        self.identity_cache.lock().unwrap().insert(entity, v.clone());
        v
    }

    fn bucket_raw(&self, bucket: &RelationBucket) -> Vec<f64> {
        if let Some(v) = self.bucket_cache.lock().unwrap().get(bucket) {
            return v.clone();
        }
        let v = self.seeded_unit(bucket_tag(bucket) ^ fnv1a(b"bucket"));
        self.bucket_cache.lock().unwrap().insert(*bucket, v.clone());
        v
    }

    fn projected(&self, which: u8, entity: EntityId) -> Vec<f64> {
        if let Some(v) = self.projected_cache.lock().unwrap().get(&(which, entity)) {
            return v.clone();
        }
        let u = self.identity_raw(entity);
        let l = self.config.dim;
        let m = if which == 0 { &self.p } else { &self.q };
        let mut out = vec![0.0; l];
        for (row, o) in out.iter_mut().enumerate() {
            let base = row * l;
            *o = (0..l).map(|c| m[base + c] * u[c]).sum();
        }
        self.projected_cache
            .lock()
            .unwrap()
            .insert((which, entity), out.clone());
        out
    }

    fn apply_noise(&self, clean: Vec<f64>, noise: Option<&mut ChaCha8Rng>) -> FeatureVec {
        match noise {
            Some(rng) if self.config.sigma > 0.0 => {
                let g = gaussians(rng, self.config.dim);
                let scale = self.config.sigma / (self.config.dim as f64).sqrt();
                let noisy: Vec<f64> = clean
                    .iter()
                    .zip(&g)
                    .map(|(c, gi)| c + scale * gi)
                    .collect();
                FeatureVec::normalize(&noisy).expect("noisy feature non-degenerate")
            }
            _ => FeatureVec::from_unit(clean).expect("clean feature is unit-norm"),
        }
    }

    fn pair_feature_clean(&self, bucket: &RelationBucket, i: EntityId, j: EntityId) -> Vec<f64> {
        let b = self.bucket_raw(bucket);
        let pi = self.projected(0, i);
        let qj = self.projected(1, j);
        let raw: Vec<f64> = b
            .iter()
            .zip(&pi)
            .zip(&qj)
            .map(|((bv, pv), qv)| BUCKET_WEIGHT * bv + pv + qv)
            .collect();
        let norm = raw.iter().map(|x| x * x).sum::<f64>().sqrt();
        raw.into_iter().map(|x| x / norm).collect()
    }

    /// Relational scene feature for an ordered entity pair in a scene.
    /// `i == j` yields the node feature.
    pub fn pair_feature(
        &self,
        scene: &Scene,
        i: EntityId,
        j: EntityId,
        noise: Option<&mut ChaCha8Rng>,
    ) -> Result<FeatureVec, EncoderError> {
        let bucket = relation_bucket(scene, i, j)?;
        Ok(self.apply_noise(self.pair_feature_clean(&bucket, i, j), noise))
    }

    /// Scene feature for a pair of detections from one observation.
    pub fn scene_feature(
        &self,
        scene: &Scene,
        det_i: &Detection,
        det_j: &Detection,
        noise: Option<&mut ChaCha8Rng>,
    ) -> Result<FeatureVec, EncoderError> {
        self.pair_feature(scene, det_i.entity, det_j.entity, noise)
    }

    /// Layout-invariant identity feature of an entity.
    pub fn identity_feature(
        &self,
        entity: EntityId,
        noise: Option<&mut ChaCha8Rng>,
    ) -> FeatureVec {
        self.apply_noise(self.identity_raw(entity), noise)
    }

    /// What the scene feature of edge (object, receptacle) would be if the
    /// object sat on that receptacle. Used to ground a stored relation
    /// feature back to a concrete placement target.
    pub fn support_edge_hypothesis(&self, object: u32, receptacle: u32) -> FeatureVec {
        let bucket = RelationBucket::Edge {
            kind: RelationKind::SupportedBy,
            dx: 0,
            dy: 0,
        };
        let clean = self.pair_feature_clean(
            &bucket,
            EntityId::Object(object),
            EntityId::Receptacle(receptacle),
        );
        FeatureVec::from_unit(clean).expect("clean feature is unit-norm")
    }

    /// Encodes one observation into a local graph: n node features, n²−n
    /// directed edge features, and per-detection identity features.
    ///
    /// Noise draws are keyed by `(noise_seed, entities)`, so detection order
    /// never changes feature values.
    pub fn encode_observation(
        &self,
        scene: &Scene,
        obs: &Observation,
        noise_seed: u64,
    ) -> Result<LocalGraph, EncoderError> {
        let item_rng = |tag: u64| -> ChaCha8Rng {
            ChaCha8Rng::seed_from_u64(splitmix(self.config.seed ^ splitmix(noise_seed ^ tag)))
        };
        let mut nodes = Vec::with_capacity(obs.detections.len());
        for det in &obs.detections {
            let tag = entity_tag(det.entity);
            let mut node_rng = item_rng(tag ^ fnv1a(b"node-noise"));
            let mut id_rng = item_rng(tag ^ fnv1a(b"id-noise"));
            nodes.push(LocalNode {
                scene_feat: self.pair_feature(scene, det.entity, det.entity, Some(&mut node_rng))?,
                identity_feat: self.identity_feature(det.entity, Some(&mut id_rng)),
                entity: det.entity,
            });
        }
        let mut edges = std::collections::BTreeMap::new();
        for (a, da) in obs.detections.iter().enumerate() {
            for (b, db) in obs.detections.iter().enumerate() {
                if a == b {
                    continue;
                }
                let tag = splitmix(entity_tag(da.entity)).wrapping_add(entity_tag(db.entity));
                let mut edge_rng = item_rng(tag ^ fnv1a(b"edge-noise"));
                edges.insert(
                    (a, b),
                    self.pair_feature(scene, da.entity, db.entity, Some(&mut edge_rng))?,
                );
            }
        }
        Ok(LocalGraph { nodes, edges })
    }
}
