//! The full two-phase rearrangement episode: explore the target layout,
//! explore the shuffled layout, detect what moved, and put it back.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::csr::{detect_changes, CsrGraph, NodeId};
use crate::embodied::{fuse, plan_to_node, StateGraph};
use crate::encoder::Encoder;
use crate::numerics::cos_sim;
use crate::world::{
    default_start_pose, generate_scene, heuristic_explore, observe, shuffle, step, Action,
    AgentPose, EntityId, MovedObject, Phase, Scene, StepStatus,
};

use super::{EpisodeConfig, PipelineError};

const SHUFFLE_SALT: u64 = 0x5d4c_3b2a_1908_f7e6;

/// Outcome of one rearrangement episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    pub success: u8,
    pub fixed_strict: f64,
    pub energy_ratio: f64,
    pub moved_detected: BTreeSet<u32>,
    pub moved_truth: BTreeSet<u32>,
    pub action_count: usize,
}

/// One explored trajectory: its scene graph, its embodied state graph
/// (node ids offset into a shared namespace), evaluation-only entity maps,
/// and where the agent ended up.
struct Trajectory {
    csr: CsrGraph,
    states: StateGraph,
    node_entity: BTreeMap<NodeId, EntityId>,
    entity_node: BTreeMap<EntityId, NodeId>,
    end_pose: AgentPose,
    action_count: usize,
}

fn execute_trajectory(
    world: &Scene,
    start: &AgentPose,
    actions: &[Action],
    encoder: &Encoder,
    node_threshold: f64,
    noise_salt: u64,
    id_offset: NodeId,
) -> Result<Trajectory, PipelineError> {
    let mut csr = CsrGraph::new();
    let mut states = StateGraph::new();
    let mut node_entity = BTreeMap::new();
    let mut entity_node = BTreeMap::new();
    let mut pose = *start;

    let ingest_and_record =
        |csr: &mut CsrGraph,
         states: &mut StateGraph,
         node_entity: &mut BTreeMap<NodeId, EntityId>,
         entity_node: &mut BTreeMap<EntityId, NodeId>,
         pose: AgentPose,
         prev: Option<(u32, Action)>,
         obs_index: u64|
         -> Result<u32, PipelineError> {
            let obs = observe(world, &pose);
            let local = encoder.encode_observation(world, &obs, noise_salt ^ obs_index)?;
            let report = csr.ingest(&local, node_threshold)?;
            let mut ids = Vec::with_capacity(local.nodes.len());
            for (idx, node) in local.nodes.iter().enumerate() {
                let gid = report
                    .node_for_local(idx)
                    .expect("every local node lands in the graph")
                    + id_offset;
                node_entity.entry(gid).or_insert(node.entity);
                entity_node.entry(node.entity).or_insert(gid);
                ids.push(gid);
            }
            Ok(states.record(prev, pose, ids)?)
        };

    let mut state = ingest_and_record(
        &mut csr,
        &mut states,
        &mut node_entity,
        &mut entity_node,
        pose,
        None,
        0,
    )?;
    for (i, action) in actions.iter().enumerate() {
        let (_, next_pose, status) = step(world, &pose, action)?;
        debug_assert!(status.is_ok(), "exploration action {action:?} failed");
        pose = next_pose;
        state = ingest_and_record(
            &mut csr,
            &mut states,
            &mut node_entity,
            &mut entity_node,
            pose,
            Some((state, *action)),
            i as u64 + 1,
        )?;
    }
    Ok(Trajectory {
        csr,
        states,
        node_entity,
        entity_node,
        end_pose: pose,
        action_count: actions.len(),
    })
}

/// Waypoint targets covering every object at its current location.
fn full_coverage(scene: &Scene) -> Vec<MovedObject> {
    scene
        .objects
        .iter()
        .map(|o| MovedObject {
            id: o.id,
            from: o.receptacle,
            to: o.receptacle,
        })
        .collect()
}

/// Most likely object for a stored identity feature among currently
/// visible detections.
fn identify_object(
    world: &Scene,
    pose: &AgentPose,
    encoder: &Encoder,
    identity: &crate::numerics::FeatureVec,
) -> Result<Option<u32>, PipelineError> {
    let mut best: Option<(f64, u32)> = None;
    for det in observe(world, pose).detections {
        let EntityId::Object(o) = det.entity else {
            continue;
        };
        let score = cos_sim(&encoder.identity_feature(det.entity, None), identity)?;
        if best.map_or(true, |(b, _)| score > b) {
            best = Some((score, o));
        }
    }
    Ok(best.map(|(_, o)| o))
}

/// Receptacle whose support hypothesis best explains some stored edge
/// leaving `node` — i.e. where the graph believes `object` was sitting.
fn best_supported_receptacle(
    csr: &CsrGraph,
    node: NodeId,
    object: u32,
    encoder: &Encoder,
    receptacles: &[u32],
) -> Result<Option<u32>, PipelineError> {
    let mut best: Option<(f64, u32)> = None;
    for &r in receptacles {
        let hyp = encoder.support_edge_hypothesis(object, r);
        for ((a, _), edge) in csr.edges() {
            if *a != node {
                continue;
            }
            let score = cos_sim(&edge.feat, &hyp)?;
            if best.map_or(true, |(b, _)| score > b) {
                best = Some((score, r));
            }
        }
    }
    Ok(best.map(|(_, r)| r))
}

/// Runs one full episode and scores it.
pub fn run_rearrangement(cfg: &EpisodeConfig) -> Result<EpisodeMetrics, PipelineError> {
    cfg.validate()?;
    let target = generate_scene(&cfg.scene, cfg.seed)?;
    let (shuffled, moved) = shuffle(&target, cfg.shuffle_k, cfg.seed ^ SHUFFLE_SALT)?;
    let start = default_start_pose(&target)?;
    let encoder = Encoder::new(cfg.encoder)?;
    let moved_truth: BTreeSet<u32> = moved.iter().map(|m| m.id).collect();

    // Phase 1: walkthrough of the target layout.
    let walk_targets = if cfg.heuristic_trajectory {
        moved.clone()
    } else {
        full_coverage(&target)
    };
    let walk_actions = heuristic_explore(&target, &walk_targets, &start, Phase::Walkthrough)?;
    let walk = execute_trajectory(
        &target,
        &start,
        &walk_actions,
        &encoder,
        cfg.thresholds.node,
        cfg.seed ^ 0x11,
        0,
    )?;

    // Phase 2: unshuffle exploration of the shuffled layout; its node ids
    // live above the walkthrough's in a shared namespace.
    let offset = walk.csr.next_id();
    let un_targets = if cfg.heuristic_trajectory {
        moved.clone()
    } else {
        full_coverage(&shuffled)
    };
    let un_actions = heuristic_explore(&shuffled, &un_targets, &start, Phase::Unshuffle)?;
    let un = execute_trajectory(
        &shuffled,
        &start,
        &un_actions,
        &encoder,
        cfg.thresholds.node,
        cfg.seed ^ 0x22,
        offset,
    )?;

    // Change detection: (walk node, raw un node, confidence) per moved object.
    let mut moved_detected = BTreeSet::new();
    let mut restores: Vec<(NodeId, NodeId, f64)> = Vec::new();
    if cfg.gt_matching {
        for (&entity, &wnode) in &walk.entity_node {
            let EntityId::Object(o) = entity else {
                continue;
            };
            let Some(&unode) = un.entity_node.get(&entity) else {
                continue;
            };
            let (Some(w), Some(u)) = (walk.csr.node(wnode), un.csr.node(unode - offset)) else {
                continue;
            };
            if cos_sim(&w.scene_feat, &u.scene_feat)? < cfg.thresholds.moved {
                moved_detected.insert(o);
                restores.push((wnode, unode - offset, 1.0));
            }
        }
    } else {
        let report = detect_changes(
            &walk.csr,
            &un.csr,
            cfg.thresholds.object,
            cfg.thresholds.moved,
        )?;
        for c in &report.correspondences {
            if !c.moved {
                continue;
            }
            restores.push((c.walk, c.un, c.identity_score));
            // Evaluation-only mapping back to instance ids.
            if let Some(EntityId::Object(o)) = un.node_entity.get(&(c.un + offset)) {
                moved_detected.insert(*o);
            }
        }
    }
    // Most confident fixes first; node id breaks ties.
    restores.sort_by(|a, b| b.2.total_cmp(&a.2).then(a.0.cmp(&b.0)));

    // Restoration over the fused embodied graph.
    let fused = fuse(&walk.states, &un.states)?;
    let mut world = shuffled.clone();
    let mut pose = un.end_pose;
    let mut action_count = walk.action_count + un.action_count;
    let mut touched = BTreeSet::new();
    let receptacle_ids: Vec<u32> = target.receptacles.iter().map(|r| r.id).collect();

    let exec = |world: &mut Scene,
                    pose: &mut AgentPose,
                    action: Action,
                    count: &mut usize|
     -> Result<StepStatus, PipelineError> {
        let (next_world, next_pose, status) = step(world, pose, &action)?;
        *world = next_world;
        *pose = next_pose;
        *count += 1;
        Ok(status)
    };

    let max_attempts = restores.len() + 2;
    let mut queue: VecDeque<(NodeId, NodeId, usize)> =
        restores.iter().map(|&(w, u, _)| (w, u, 0)).collect();
    'queue: while let Some((wnode, unode, attempts)) = queue.pop_front() {
        let Some(cur) = fused.state_for_pose(&pose) else {
            break;
        };
        // Go look at the object where the unshuffle phase saw it.
        let Ok(to_object) = plan_to_node(&fused, cur, unode + offset) else {
            continue;
        };
        for action in &to_object.actions {
            if !exec(&mut world, &mut pose, *action, &mut action_count)?.is_ok() {
                continue 'queue;
            }
        }

        let object = if cfg.gt_matching {
            match un.node_entity.get(&(unode + offset)) {
                Some(EntityId::Object(o)) => *o,
                _ => continue,
            }
        } else {
            let Some(u) = un.csr.node(unode) else {
                continue;
            };
            match identify_object(&world, &pose, &encoder, &u.identity_feat)? {
                Some(o) => o,
                None => continue,
            }
        };
        // Remember where it came from in case the target is occupied.
        let Some(source) = world.object(object).map(|o| o.receptacle) else {
            continue;
        };
        if exec(&mut world, &mut pose, Action::PickUp(object), &mut action_count)?
            != StepStatus::Ok
        {
            continue;
        }
        touched.insert(object);

        let destination = if cfg.gt_matching {
            target.object(object).map(|o| o.receptacle)
        } else {
            best_supported_receptacle(&walk.csr, wnode, object, &encoder, &receptacle_ids)?
        };

        // Carry it to where the walkthrough saw its node, then set it down.
        let placed = match (destination, fused.state_for_pose(&pose)) {
            (Some(dest), Some(cur)) => match plan_to_node(&fused, cur, wnode) {
                Ok(plan) => {
                    let mut ok = true;
                    for action in &plan.actions {
                        if !exec(&mut world, &mut pose, *action, &mut action_count)?.is_ok() {
                            ok = false;
                            break;
                        }
                    }
                    ok && exec(&mut world, &mut pose, Action::Place(dest), &mut action_count)?
                        == StepStatus::Ok
                }
                Err(_) => false,
            },
            _ => false,
        };
        if placed {
            continue;
        }

        // Couldn't set it down (e.g. the destination is still full): put it
        // back where it was and retry after other objects have moved.
        if let Some(cur) = fused.state_for_pose(&pose) {
            if let Ok(back) = plan_to_node(&fused, cur, unode + offset) {
                let mut ok = true;
                for action in &back.actions {
                    if !exec(&mut world, &mut pose, *action, &mut action_count)?.is_ok() {
                        ok = false;
                        break;
                    }
                }
                if ok {
                    let _ = exec(&mut world, &mut pose, Action::Place(source), &mut action_count)?;
                }
            }
        }
        if world.held.is_none() && attempts + 1 < max_attempts {
            queue.push_back((wnode, unode, attempts + 1));
        }
    }

    Ok(EpisodeMetrics {
        success: super::success_metric(&world, &target, &touched)?,
        fixed_strict: super::fixed_strict_metric(&world, &target, &moved_truth, &touched)?,
        energy_ratio: super::energy_metric(&shuffled, &world, &target)?,
        moved_detected,
        moved_truth,
        action_count,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::EncoderConfig;

    fn oracle_config(seed: u64) -> EpisodeConfig {
        EpisodeConfig {
            gt_matching: true,
            heuristic_trajectory: true,
            seed,
            ..EpisodeConfig::default()
        }
    }

    #[test]
    fn oracle_episode_restores_everything() {
        for seed in 0..10u64 {
            let metrics = run_rearrangement(&oracle_config(seed)).unwrap();
            assert_eq!(metrics.success, 1, "seed {seed}: {metrics:?}");
            assert_eq!(metrics.fixed_strict, 1.0, "seed {seed}");
            assert_eq!(metrics.energy_ratio, 0.0, "seed {seed}");
            assert!(metrics.action_count > 0);
        }
    }

    #[test]
    fn estimated_matching_restores_clean_episodes() {
        for seed in 20..30u64 {
            let cfg = EpisodeConfig {
                seed,
                ..EpisodeConfig::default()
            };
            let metrics = run_rearrangement(&cfg).unwrap();
            assert_eq!(metrics.success, 1, "seed {seed}: {metrics:?}");
            assert_eq!(metrics.moved_detected, metrics.moved_truth, "seed {seed}");
        }
    }

    #[test]
    fn full_coverage_change_detection_is_exact() {
        for (i, k) in (1..=5).enumerate() {
            let cfg = EpisodeConfig {
                shuffle_k: k,
                heuristic_trajectory: false,
                seed: 40 + i as u64,
                ..EpisodeConfig::default()
            };
            let metrics = run_rearrangement(&cfg).unwrap();
            assert_eq!(metrics.moved_detected, metrics.moved_truth, "k = {k}");
        }
    }

    #[test]
    fn success_implies_other_metrics() {
        for seed in 50..70u64 {
            let cfg = EpisodeConfig {
                encoder: EncoderConfig {
                    sigma: 0.3,
                    ..EncoderConfig::default()
                },
                seed,
                ..EpisodeConfig::default()
            };
            let metrics = run_rearrangement(&cfg).unwrap();
            if metrics.success == 1 {
                assert_eq!(metrics.fixed_strict, 1.0, "seed {seed}");
                assert_eq!(metrics.energy_ratio, 0.0, "seed {seed}");
            }
        }
    }

    #[test]
    fn invalid_config_is_rejected() {
        let bad_k = EpisodeConfig {
            shuffle_k: 6,
            ..EpisodeConfig::default()
        };
        assert!(matches!(
            run_rearrangement(&bad_k),
            Err(PipelineError::BadShuffleK(6))
        ));
        let bad_threshold = EpisodeConfig {
            thresholds: super::super::Thresholds {
                node: 1.5,
                ..Default::default()
            },
            ..EpisodeConfig::default()
        };
        assert!(matches!(
            run_rearrangement(&bad_threshold),
            Err(PipelineError::BadThreshold { name: "node", .. })
        ));
    }
}
