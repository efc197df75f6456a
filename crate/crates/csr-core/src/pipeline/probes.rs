//! Linear-probe datasets over edge features: support (three-way) and
//! sibling (binary) relationship decoding, split by scene.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::encoder::Encoder;
use crate::numerics::{probe_accuracy, train_probe, FeatureVec, TrainedProbe};
use crate::world::{EntityId, Scene};

use super::PipelineError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProbeTask {
    /// 3 classes: i supports j / j supports i / neither.
    Support,
    /// 2 classes: objects share a receptacle or not.
    Sibling,
}

impl ProbeTask {
    pub fn num_classes(self) -> usize {
        match self {
            ProbeTask::Support => 3,
            ProbeTask::Sibling => 2,
        }
    }

    fn class_name(self, label: usize) -> &'static str {
        match (self, label) {
            (ProbeTask::Support, 0) => "supports",
            (ProbeTask::Support, 1) => "supported-by",
            (ProbeTask::Support, 2) => "unrelated",
            (ProbeTask::Sibling, 0) => "not-sibling",
            (ProbeTask::Sibling, 1) => "sibling",
            _ => "unknown",
        }
    }
}

#[derive(Debug, Clone)]
pub struct ProbeDataset {
    pub task: ProbeTask,
    pub train_features: Vec<FeatureVec>,
    pub train_labels: Vec<usize>,
    pub test_features: Vec<FeatureVec>,
    pub test_labels: Vec<usize>,
}

impl ProbeDataset {
    /// Trains a probe on the train split and scores both splits.
    pub fn train_and_eval(
        &self,
        lr: f64,
        epochs: usize,
    ) -> Result<(TrainedProbe, f64, f64), PipelineError> {
        let trained = train_probe(
            &self.train_features,
            &self.train_labels,
            self.task.num_classes(),
            lr,
            epochs,
        )?;
        let train_acc = probe_accuracy(&trained.model, &self.train_features, &self.train_labels)?;
        let test_acc = probe_accuracy(&trained.model, &self.test_features, &self.test_labels)?;
        Ok((trained, train_acc, test_acc))
    }
}

fn labeled_pairs(scene: &Scene, task: ProbeTask) -> Vec<(EntityId, EntityId, usize)> {
    let mut out = Vec::new();
    match task {
        ProbeTask::Support => {
            let mut entities: Vec<EntityId> = scene
                .receptacles
                .iter()
                .map(|r| EntityId::Receptacle(r.id))
                .collect();
            entities.extend(scene.objects.iter().map(|o| EntityId::Object(o.id)));
            for &i in &entities {
                for &j in &entities {
                    if i == j {
                        continue;
                    }
                    let label = match (i, j) {
                        (EntityId::Receptacle(r), EntityId::Object(o))
                            if scene.object(o).map(|p| p.receptacle) == Some(r) =>
                        {
                            0
                        }
                        (EntityId::Object(o), EntityId::Receptacle(r))
                            if scene.object(o).map(|p| p.receptacle) == Some(r) =>
                        {
                            1
                        }
                        _ => 2,
                    };
                    out.push((i, j, label));
                }
            }
        }
        ProbeTask::Sibling => {
            for a in &scene.objects {
                for b in &scene.objects {
                    if a.id == b.id {
                        continue;
                    }
                    let label = (a.receptacle == b.receptacle) as usize;
                    out.push((EntityId::Object(a.id), EntityId::Object(b.id), label));
                }
            }
        }
    }
    out
}

fn encode_split(
    scenes: &[Scene],
    task: ProbeTask,
    encoder: &Encoder,
    seed: u64,
) -> Result<(Vec<FeatureVec>, Vec<usize>), PipelineError> {
    let mut by_class: Vec<Vec<FeatureVec>> = vec![Vec::new(); task.num_classes()];
    for (scene_idx, scene) in scenes.iter().enumerate() {
        for (pair_idx, (i, j, label)) in labeled_pairs(scene, task).into_iter().enumerate() {
            let mut noise = ChaCha8Rng::seed_from_u64(
                seed ^ ((scene_idx as u64) << 24) ^ (pair_idx as u64),
            );
            by_class[label].push(encoder.pair_feature(scene, i, j, Some(&mut noise))?);
        }
    }
    if let Some(label) = by_class.iter().position(|c| c.is_empty()) {
        return Err(PipelineError::EmptyProbeClass(
            task.class_name(label).to_string(),
        ));
    }

    // Balance classes exactly by seeded subsampling.
    let per_class = by_class.iter().map(Vec::len).min().expect("nonempty");
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6261_6c61_6e63_65);
    let mut features = Vec::with_capacity(per_class * by_class.len());
    let mut labels = Vec::with_capacity(per_class * by_class.len());
    for (label, mut class) in by_class.into_iter().enumerate() {
        class.shuffle(&mut rng);
        class.truncate(per_class);
        labels.extend(std::iter::repeat(label).take(per_class));
        features.extend(class);
    }
    Ok((features, labels))
}

/// Balanced labeled edge-feature dataset with an 80/20 train/test split by
/// scene — the splits never share a scene.
pub fn build_probe_dataset(
    scenes: &[Scene],
    task: ProbeTask,
    encoder: &Encoder,
    seed: u64,
) -> Result<ProbeDataset, PipelineError> {
    if scenes.len() < 2 {
        return Err(PipelineError::TooFewScenes(scenes.len()));
    }
    let test_count = (scenes.len() / 5).max(1);
    let (train_scenes, test_scenes) = scenes.split_at(scenes.len() - test_count);
    let (train_features, train_labels) = encode_split(train_scenes, task, encoder, seed)?;
    let (test_features, test_labels) = encode_split(test_scenes, task, encoder, seed ^ 0x74)?;
    Ok(ProbeDataset {
        task,
        train_features,
        train_labels,
        test_features,
        test_labels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::EncoderConfig;
    use crate::world::{generate_scene, SceneConfig};

    fn scenes(n: u64) -> Vec<Scene> {
        (0..n)
            .map(|s| generate_scene(&SceneConfig::default(), s).unwrap())
            .collect()
    }

    fn encoder(sigma: f64) -> Encoder {
        Encoder::new(EncoderConfig {
            sigma,
            ..EncoderConfig::default()
        })
        .unwrap()
    }

    fn counts(labels: &[usize], k: usize) -> Vec<usize> {
        let mut c = vec![0; k];
        for &l in labels {
            c[l] += 1;
        }
        c
    }

    #[test]
    fn support_classes_are_balanced() {
        let ds = build_probe_dataset(&scenes(10), ProbeTask::Support, &encoder(0.0), 1).unwrap();
        let train = counts(&ds.train_labels, 3);
        let test = counts(&ds.test_labels, 3);
        assert!(train.iter().all(|&c| c == train[0] && c > 0), "{train:?}");
        assert!(test.iter().all(|&c| c == test[0] && c > 0), "{test:?}");
    }

    #[test]
    fn reversing_pair_order_flips_support_label() {
        let scene = generate_scene(&SceneConfig::default(), 2).unwrap();
        let pairs = labeled_pairs(&scene, ProbeTask::Support);
        for &(i, j, label) in &pairs {
            if label > 1 {
                continue;
            }
            let reversed = pairs
                .iter()
                .find(|(a, b, _)| *a == j && *b == i)
                .expect("reversed pair present");
            assert_eq!(reversed.2, 1 - label);
        }
    }

    #[test]
    fn sibling_labels_match_receptacles() {
        let scene = generate_scene(&SceneConfig::default(), 3).unwrap();
        for (i, j, label) in labeled_pairs(&scene, ProbeTask::Sibling) {
            let (EntityId::Object(a), EntityId::Object(b)) = (i, j) else {
                panic!("sibling pairs are object pairs");
            };
            let same = scene.object(a).unwrap().receptacle == scene.object(b).unwrap().receptacle;
            assert_eq!(label == 1, same);
        }
    }

    #[test]
    fn support_probe_decodes_clean_features() {
        let ds = build_probe_dataset(&scenes(15), ProbeTask::Support, &encoder(0.0), 4).unwrap();
        let (_, train_acc, test_acc) = ds.train_and_eval(0.5, 400).unwrap();
        assert!(train_acc >= 0.95, "train accuracy {train_acc}");
        assert!(test_acc >= 0.9, "test accuracy {test_acc}");
    }

    #[test]
    fn sibling_probe_beats_chance() {
        let ds = build_probe_dataset(&scenes(15), ProbeTask::Sibling, &encoder(0.0), 5).unwrap();
        let (_, _, test_acc) = ds.train_and_eval(0.5, 400).unwrap();
        assert!(test_acc >= 0.8, "test accuracy {test_acc}");
    }

    #[test]
    fn shuffled_labels_score_chance() {
        use rand::seq::SliceRandom;
        let mut ds = build_probe_dataset(&scenes(12), ProbeTask::Support, &encoder(0.0), 6).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        ds.train_labels.shuffle(&mut rng);
        ds.test_labels.shuffle(&mut rng);
        let (_, _, test_acc) = ds.train_and_eval(0.5, 200).unwrap();
        assert!((test_acc - 1.0 / 3.0).abs() < 0.15, "test accuracy {test_acc}");
    }

    #[test]
    fn too_few_scenes_is_an_error() {
        assert!(matches!(
            build_probe_dataset(&scenes(1), ProbeTask::Support, &encoder(0.0), 0),
            Err(PipelineError::TooFewScenes(1))
        ));
    }
}
