//! Waypoint exploration: greedily visit the closest location from which
//! each shuffled object (before and after its move) can be observed, taking
//! grid-shortest paths; the unshuffle phase visits waypoints in reverse.

use std::collections::{BTreeSet, HashMap, VecDeque};

use super::{
    visible_cells, Action, AgentPose, Cell, Heading, MovedObject, Scene, WorldError,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Walkthrough,
    Unshuffle,
}

/// A pose from which one exploration target is observable, tagged with the
/// object it covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Waypoint {
    pub object: u32,
    pub cell: Cell,
    pub heading: Heading,
}

/// Closest traversable cell (squared euclidean distance to the target,
/// ties by row-major order) from which `target` is visible, with the first
/// heading that sees it.
fn observation_spot(scene: &Scene, target: Cell, object: u32) -> Result<Waypoint, WorldError> {
    let mut best: Option<(i32, Waypoint)> = None;
    for y in 0..scene.height {
        for x in 0..scene.width {
            let cell = (x, y);
            if !scene.is_traversable(cell) {
                continue;
            }
            let Some(heading) = Heading::ALL
                .into_iter()
                .find(|&h| visible_cells(scene, &AgentPose { cell, heading: h }).contains(&target))
            else {
                continue;
            };
            let d = (cell.0 - target.0).pow(2) + (cell.1 - target.1).pow(2);
            if best.map_or(true, |(bd, _)| d < bd) {
                best = Some((
                    d,
                    Waypoint {
                        object,
                        cell,
                        heading,
                    },
                ));
            }
        }
    }
    best.map(|(_, w)| w).ok_or(WorldError::Unobservable { object })
}

/// BFS over traversable cells; returns the cell path excluding `from`.
fn shortest_path(scene: &Scene, from: Cell, to: Cell) -> Option<Vec<Cell>> {
    if from == to {
        return Some(vec![]);
    }
    let mut parent: HashMap<Cell, Cell> = HashMap::new();
    let mut seen = BTreeSet::from([from]);
    let mut queue = VecDeque::from([from]);
    while let Some(c) = queue.pop_front() {
        for d in [(0, -1), (1, 0), (0, 1), (-1, 0)] {
            let n = (c.0 + d.0, c.1 + d.1);
            if scene.is_traversable(n) && seen.insert(n) {
                parent.insert(n, c);
                if n == to {
                    let mut path = vec![n];
                    let mut cur = n;
                    while let Some(&p) = parent.get(&cur) {
                        if p == from {
                            break;
                        }
                        path.push(p);
                        cur = p;
                    }
                    path.reverse();
                    return Some(path);
                }
                queue.push_back(n);
            }
        }
    }
    None
}

fn path_length(scene: &Scene, from: Cell, to: Cell) -> Option<usize> {
    shortest_path(scene, from, to).map(|p| p.len())
}

/// Heading-relative move action realizing a one-cell displacement without
/// turning.
fn move_action(heading: Heading, delta: Cell) -> Action {
    let fwd = heading.forward();
    let right = heading.right();
    if delta == fwd {
        Action::MoveForward
    } else if delta == (-fwd.0, -fwd.1) {
        Action::MoveBack
    } else if delta == right {
        Action::MoveRight
    } else {
        Action::MoveLeft
    }
}

/// Ordered waypoint list for one trajectory: one waypoint per distinct
/// (object, receptacle) location in the moved set, covering each object's
/// position both before and after its move. Walkthrough order is
/// greedy-nearest by path length from the current cell; unshuffle visits
/// the same waypoints in reversed order.
pub fn exploration_waypoints(
    scene: &Scene,
    moved: &[MovedObject],
    start: &AgentPose,
    phase: Phase,
) -> Result<Vec<Waypoint>, WorldError> {
    // (object, target cell) pairs, deduplicated, in stable order.
    let mut targets: Vec<(u32, Cell)> = Vec::new();
    for m in moved {
        for rid in [m.from, m.to] {
            let rec = scene
                .receptacle(rid)
                .ok_or(WorldError::UnknownReceptacle(rid))?;
            if !targets.contains(&(m.id, rec.cell)) {
                targets.push((m.id, rec.cell));
            }
        }
    }

    let mut pending: Vec<Waypoint> = targets
        .iter()
        .map(|&(id, cell)| observation_spot(scene, cell, id))
        .collect::<Result<_, WorldError>>()?;

    let mut order: Vec<Waypoint> = Vec::with_capacity(pending.len());
    let mut cur = start.cell;
    while !pending.is_empty() {
        let mut best: Option<(usize, usize)> = None; // (index, distance)
        for (i, w) in pending.iter().enumerate() {
            let d = path_length(scene, cur, w.cell)
                .ok_or(WorldError::Unreachable { object: w.object })?;
            if best.map_or(true, |(_, bd)| d < bd) {
                best = Some((i, d));
            }
        }
        let (idx, _) = best.expect("pending not empty");
        let next = pending.remove(idx);
        cur = next.cell;
        order.push(next);
    }
    if phase == Phase::Unshuffle {
        order.reverse();
    }
    Ok(order)
}

/// Realizes a waypoint sequence as executable actions: grid-shortest moves
/// between waypoint cells (heading-relative, no turning while travelling),
/// then rotations to the observation heading.
pub fn actions_for_waypoints(
    scene: &Scene,
    start: &AgentPose,
    waypoints: &[Waypoint],
) -> Result<Vec<Action>, WorldError> {
    let mut actions = Vec::new();
    let mut pose = *start;
    for waypoint in waypoints {
        let path = shortest_path(scene, pose.cell, waypoint.cell).ok_or(WorldError::Unreachable {
            object: waypoint.object,
        })?;
        for next in path {
            let delta = (next.0 - pose.cell.0, next.1 - pose.cell.1);
            actions.push(move_action(pose.heading, delta));
            pose.cell = next;
        }
        actions.extend(pose.heading.rotations_to(waypoint.heading));
        pose.heading = waypoint.heading;
    }
    Ok(actions)
}

/// Builds the exploration action sequence for one trajectory.
pub fn heuristic_explore(
    scene: &Scene,
    moved: &[MovedObject],
    start: &AgentPose,
    phase: Phase,
) -> Result<Vec<Action>, WorldError> {
    let waypoints = exploration_waypoints(scene, moved, start, phase)?;
    actions_for_waypoints(scene, start, &waypoints)
}
