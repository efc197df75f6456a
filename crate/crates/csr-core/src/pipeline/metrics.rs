//! Rearrangement episode metrics: Success, %FixedStrict, and the energy
//! ratio %E.

use std::collections::BTreeSet;

use crate::world::{Cell, Scene};

use super::PipelineError;

fn object_ids_with_held(scene: &Scene) -> BTreeSet<u32> {
    let mut ids: BTreeSet<u32> = scene.objects.iter().map(|o| o.id).collect();
    if let Some(h) = scene.held {
        ids.insert(h);
    }
    ids
}

fn check_same_objects(a: &Scene, b: &Scene) -> Result<(), PipelineError> {
    if object_ids_with_held(a) == object_ids_with_held(b) {
        Ok(())
    } else {
        Err(PipelineError::IdMismatch)
    }
}

fn check_touched(scene: &Scene, touched: &BTreeSet<u32>) -> Result<(), PipelineError> {
    let ids = object_ids_with_held(scene);
    match touched.iter().find(|t| !ids.contains(t)) {
        Some(&t) => Err(PipelineError::UnknownTouched(t)),
        None => Ok(()),
    }
}

/// Receptacle an object occupies, or None while held.
fn receptacle_of(scene: &Scene, id: u32) -> Option<u32> {
    scene.object(id).map(|o| o.receptacle)
}

/// 1 iff every object sits on its target receptacle (a held object counts
/// as misplaced).
pub fn success_metric(
    final_scene: &Scene,
    target: &Scene,
    touched: &BTreeSet<u32>,
) -> Result<u8, PipelineError> {
    check_same_objects(final_scene, target)?;
    check_touched(final_scene, touched)?;
    let ok = final_scene.held.is_none()
        && target
            .objects
            .iter()
            .all(|t| receptacle_of(final_scene, t.id) == Some(t.receptacle));
    Ok(ok as u8)
}

/// Fraction of shuffled objects restored; zeroed by any mistake, i.e. a
/// non-shuffled object ending up off its target receptacle.
pub fn fixed_strict_metric(
    final_scene: &Scene,
    target: &Scene,
    shuffled: &BTreeSet<u32>,
    touched: &BTreeSet<u32>,
) -> Result<f64, PipelineError> {
    check_same_objects(final_scene, target)?;
    check_touched(final_scene, touched)?;
    if shuffled.is_empty() {
        return Ok(1.0);
    }
    let displaced_bystander = target
        .objects
        .iter()
        .filter(|t| !shuffled.contains(&t.id))
        .any(|t| receptacle_of(final_scene, t.id) != Some(t.receptacle));
    if displaced_bystander {
        return Ok(0.0);
    }
    let restored = target
        .objects
        .iter()
        .filter(|t| shuffled.contains(&t.id))
        .filter(|t| receptacle_of(final_scene, t.id) == Some(t.receptacle))
        .count();
    Ok(restored as f64 / shuffled.len() as f64)
}

fn manhattan(a: Cell, b: Cell) -> f64 {
    ((a.0 - b.0).abs() + (a.1 - b.1).abs()) as f64
}

/// Grid distance from an object's current receptacle to its target
/// receptacle; a held object counts as maximally displaced.
fn displacement(scene: &Scene, target: &Scene, id: u32) -> Result<Option<f64>, PipelineError> {
    let goal = target.object(id).ok_or(PipelineError::IdMismatch)?;
    let goal_cell = target
        .receptacle(goal.receptacle)
        .ok_or(PipelineError::IdMismatch)?
        .cell;
    match scene.object(id) {
        Some(placed) => {
            let cell = scene
                .receptacle(placed.receptacle)
                .ok_or(PipelineError::IdMismatch)?
                .cell;
            Ok(if placed.receptacle == goal.receptacle {
                None
            } else {
                Some(manhattan(cell, goal_cell))
            })
        }
        None => Ok(Some(f64::INFINITY)),
    }
}

fn energy(scene: &Scene, initial: &Scene, target: &Scene) -> Result<f64, PipelineError> {
    let mut total = 0.0;
    for t in &target.objects {
        let Some(d) = displacement(scene, target, t.id)? else {
            continue;
        };
        total += match displacement(initial, target, t.id)? {
            // Displaced at the start: progress measured against that start.
            Some(d0) => (d / d0).min(1.0),
            // Newly displaced object: a full unit of energy.
            None => d.min(1.0),
        };
    }
    Ok(total)
}

/// Final-to-initial displacement-energy ratio: 0 for a perfect restore,
/// 1 for no change, above 1 when the agent made things worse. Defined as 0
/// when the initial configuration already matches the target.
pub fn energy_metric(
    initial: &Scene,
    final_scene: &Scene,
    target: &Scene,
) -> Result<f64, PipelineError> {
    check_same_objects(initial, target)?;
    check_same_objects(final_scene, target)?;
    let e0 = energy(initial, initial, target)?;
    if e0 == 0.0 {
        return Ok(0.0);
    }
    Ok(energy(final_scene, initial, target)? / e0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::{generate_scene, shuffle, SceneConfig};

    fn setup(seed: u64, k: usize) -> (Scene, Scene, BTreeSet<u32>) {
        let target = generate_scene(&SceneConfig::default(), seed).unwrap();
        let (initial, moved) = shuffle(&target, k, seed + 1).unwrap();
        (target, initial, moved.iter().map(|m| m.id).collect())
    }

    #[test]
    fn noop_agent_scores_one_energy_zero_success() {
        let (target, initial, shuffled) = setup(5, 3);
        let touched = BTreeSet::new();
        assert_eq!(success_metric(&initial, &target, &touched).unwrap(), 0);
        assert_eq!(
            fixed_strict_metric(&initial, &target, &shuffled, &touched).unwrap(),
            0.0
        );
        assert_eq!(energy_metric(&initial, &initial, &target).unwrap(), 1.0);
    }

    #[test]
    fn perfect_restore_scores_full_marks() {
        let (target, initial, shuffled) = setup(6, 3);
        let touched = shuffled.clone();
        assert_eq!(success_metric(&target, &target, &touched).unwrap(), 1);
        assert_eq!(
            fixed_strict_metric(&target, &target, &shuffled, &touched).unwrap(),
            1.0
        );
        assert_eq!(energy_metric(&initial, &target, &target).unwrap(), 0.0);
    }

    #[test]
    fn partial_restore_counts_fraction() {
        let (target, initial, shuffled) = setup(7, 2);
        // Restore exactly one of the two shuffled objects.
        let &fixed = shuffled.iter().next().unwrap();
        let mut partial = initial.clone();
        let want = target.object(fixed).unwrap().clone();
        *partial.objects.iter_mut().find(|o| o.id == fixed).unwrap() = want;
        let touched = BTreeSet::from([fixed]);
        assert_eq!(success_metric(&partial, &target, &touched).unwrap(), 0);
        assert_eq!(
            fixed_strict_metric(&partial, &target, &shuffled, &touched).unwrap(),
            0.5
        );
        let e = energy_metric(&initial, &partial, &target).unwrap();
        assert!(e > 0.0 && e < 1.0, "e = {e}");
    }

    #[test]
    fn returned_bystander_is_not_a_mistake() {
        // Both metrics judge the final configuration: a bystander that was
        // picked up but put back exactly costs nothing.
        let (target, _, shuffled) = setup(8, 2);
        let bystander = target
            .objects
            .iter()
            .map(|o| o.id)
            .find(|id| !shuffled.contains(id))
            .unwrap();
        let touched = BTreeSet::from([bystander]);
        assert_eq!(
            fixed_strict_metric(&target, &target, &shuffled, &touched).unwrap(),
            1.0
        );
        assert_eq!(success_metric(&target, &target, &touched).unwrap(), 1);
    }

    #[test]
    fn displacing_a_bystander_zeroes_fixed_strict() {
        let (target, initial, shuffled) = setup(9, 2);
        let bystander = target
            .objects
            .iter()
            .find(|o| !shuffled.contains(&o.id))
            .unwrap()
            .clone();
        let other = target
            .receptacles
            .iter()
            .map(|r| r.id)
            .find(|&r| r != bystander.receptacle && target.lowest_free_offset(r).is_some())
            .unwrap();
        let mut broken = target.clone();
        let slot = broken.lowest_free_offset(other).unwrap();
        let obj = broken
            .objects
            .iter_mut()
            .find(|o| o.id == bystander.id)
            .unwrap();
        obj.receptacle = other;
        obj.offset = slot;
        assert_eq!(
            fixed_strict_metric(&broken, &target, &shuffled, &BTreeSet::new()).unwrap(),
            0.0
        );
        let e = energy_metric(&initial, &broken, &target).unwrap();
        assert!(e > 0.0);
    }

    #[test]
    fn making_things_worse_exceeds_one() {
        let (target, initial, shuffled) = setup(10, 1);
        // Displace an additional object that started at its target.
        let bystander = target
            .objects
            .iter()
            .find(|o| !shuffled.contains(&o.id))
            .unwrap()
            .clone();
        let other = initial
            .receptacles
            .iter()
            .map(|r| r.id)
            .find(|&r| r != bystander.receptacle && initial.lowest_free_offset(r).is_some())
            .unwrap();
        let mut worse = initial.clone();
        let slot = worse.lowest_free_offset(other).unwrap();
        let obj = worse
            .objects
            .iter_mut()
            .find(|o| o.id == bystander.id)
            .unwrap();
        obj.receptacle = other;
        obj.offset = slot;
        assert!(energy_metric(&initial, &worse, &target).unwrap() > 1.0);
    }

    #[test]
    fn moving_closer_strictly_reduces_energy() {
        // Find a seed where a shuffled object has an intermediate receptacle
        // strictly closer to its target.
        for seed in 0..50u64 {
            let (target, initial, shuffled) = setup(seed, 1);
            let &id = shuffled.iter().next().unwrap();
            let goal = target.object(id).unwrap().receptacle;
            let goal_cell = target.receptacle(goal).unwrap().cell;
            let cur_cell = initial
                .receptacle(initial.object(id).unwrap().receptacle)
                .unwrap()
                .cell;
            let d0 = manhattan(cur_cell, goal_cell);
            let closer = initial.receptacles.iter().find(|r| {
                r.id != goal
                    && manhattan(r.cell, goal_cell) < d0
                    && manhattan(r.cell, goal_cell) > 0.0
                    && initial.lowest_free_offset(r.id).is_some()
            });
            let Some(closer) = closer else { continue };
            let mut nearer = initial.clone();
            let slot = nearer.lowest_free_offset(closer.id).unwrap();
            let obj = nearer.objects.iter_mut().find(|o| o.id == id).unwrap();
            obj.receptacle = closer.id;
            obj.offset = slot;
            let e = energy_metric(&initial, &nearer, &target).unwrap();
            assert!(e < 1.0 && e > 0.0, "seed {seed}: e = {e}");
            return;
        }
        panic!("no seed produced an intermediate receptacle");
    }

    #[test]
    fn mismatched_ids_error() {
        let (target, initial, _) = setup(11, 1);
        let mut missing = initial.clone();
        missing.objects.pop();
        assert!(matches!(
            success_metric(&missing, &target, &BTreeSet::new()),
            Err(PipelineError::IdMismatch)
        ));
        assert!(matches!(
            energy_metric(&missing, &initial, &target),
            Err(PipelineError::IdMismatch)
        ));
        assert!(matches!(
            success_metric(&initial, &target, &BTreeSet::from([999])),
            Err(PipelineError::UnknownTouched(999))
        ));
    }

    #[test]
    fn held_object_blocks_success() {
        let (target, _, shuffled) = setup(12, 1);
        let &id = shuffled.iter().next().unwrap();
        let mut holding = target.clone();
        holding.objects.retain(|o| o.id != id);
        holding.held = Some(id);
        assert_eq!(
            success_metric(&holding, &target, &BTreeSet::from([id])).unwrap(),
            0
        );
    }
}
