//! Deterministic 2D gridworld: rooms with receptacles and movable objects,
//! an agent with discrete navigation and manipulation actions, a forward
//! visibility frustum, and episode shuffling.

mod explore;

pub use explore::{
    actions_for_waypoints, exploration_waypoints, heuristic_explore, Phase, Waypoint,
};

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const SCENE_SCHEMA_VERSION: u32 = 1;

/// Forward visibility depth of the agent, in cells.
pub const FRUSTUM_DEPTH: i32 = 5;
/// Lateral half-width of the visibility frustum, in cells.
pub const FRUSTUM_HALF_WIDTH: i32 = 2;

pub type Cell = (i32, i32);

#[derive(Debug, Error)]
pub enum WorldError {
    #[error("requested counts do not fit the grid")]
    InfeasibleCounts,
    #[error("could not generate a valid scene for seed {seed}")]
    GenerationFailed { seed: u64 },
    #[error("unknown object id {0}")]
    UnknownObject(u32),
    #[error("unknown receptacle id {0}")]
    UnknownReceptacle(u32),
    #[error("cannot shuffle {k} objects (scene has {objects} objects, {receptacles} receptacles)")]
    InfeasibleShuffle {
        k: usize,
        objects: usize,
        receptacles: usize,
    },
    #[error("object {object} is not observable from any traversable cell")]
    Unobservable { object: u32 },
    #[error("no path to a cell observing object {object}")]
    Unreachable { object: u32 },
    #[error("invalid scene: {0}")]
    InvalidScene(String),
    #[error("scene document error: {0}")]
    Document(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Heading {
    North,
    East,
    South,
    West,
}

impl Heading {
    pub const ALL: [Heading; 4] = [Heading::North, Heading::East, Heading::South, Heading::West];

    /// Unit vector the agent faces. North is -y.
    pub fn forward(self) -> Cell {
        match self {
            Heading::North => (0, -1),
            Heading::East => (1, 0),
            Heading::South => (0, 1),
            Heading::West => (-1, 0),
        }
    }

    /// Unit vector to the agent's right.
    pub fn right(self) -> Cell {
        self.clockwise().forward()
    }

    pub fn clockwise(self) -> Heading {
        match self {
            Heading::North => Heading::East,
            Heading::East => Heading::South,
            Heading::South => Heading::West,
            Heading::West => Heading::North,
        }
    }

    pub fn counterclockwise(self) -> Heading {
        self.clockwise().clockwise().clockwise()
    }

    fn index(self) -> i32 {
        match self {
            Heading::North => 0,
            Heading::East => 1,
            Heading::South => 2,
            Heading::West => 3,
        }
    }

    /// Minimal rotation sequence turning `self` into `target`.
    pub fn rotations_to(self, target: Heading) -> Vec<Action> {
        match (target.index() - self.index()).rem_euclid(4) {
            0 => vec![],
            1 => vec![Action::RotateRight],
            2 => vec![Action::RotateRight, Action::RotateRight],
            _ => vec![Action::RotateLeft],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct AgentPose {
    pub cell: Cell,
    pub heading: Heading,
}

/// Discrete agent actions. Moves are heading-relative and never rotate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Action {
    MoveForward,
    MoveBack,
    MoveLeft,
    MoveRight,
    RotateLeft,
    RotateRight,
    PickUp(u32),
    Place(u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepStatus {
    Ok,
    /// Navigation blocked by a wall, receptacle, or the room boundary.
    Blocked,
    /// PickUp refused: object not visible or hands already full.
    CannotPickUp,
    /// Place refused: not holding, receptacle not visible, or it is full.
    CannotPlace,
}

impl StepStatus {
    pub fn is_ok(self) -> bool {
        self == StepStatus::Ok
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Receptacle {
    pub id: u32,
    pub cell: Cell,
    pub capacity: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlacedObject {
    pub id: u32,
    pub receptacle: u32,
    pub offset: u32,
}

/// Ground-truth identity of a detected entity. Visible to the oracle
/// encoder and to evaluators; matching logic must treat it as opaque.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EntityId {
    Object(u32),
    Receptacle(u32),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Detection {
    pub entity: EntityId,
    /// Viewer-relative footprint: (forward, lateral) cells occupied.
    pub region: Vec<Cell>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Observation {
    pub pose: AgentPose,
    pub detections: Vec<Detection>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MovedObject {
    pub id: u32,
    pub from: u32,
    pub to: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scene {
    pub width: i32,
    pub height: i32,
    pub walls: BTreeSet<Cell>,
    pub receptacles: Vec<Receptacle>,
    pub objects: Vec<PlacedObject>,
    /// Object currently carried by the agent, if any.
    pub held: Option<u32>,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneConfig {
    pub width: i32,
    pub height: i32,
    pub num_receptacles: u32,
    pub num_objects: u32,
    pub num_walls: u32,
    pub receptacle_capacity: u32,
}

impl Default for SceneConfig {
    fn default() -> Self {
        SceneConfig {
            width: 12,
            height: 12,
            num_receptacles: 5,
            num_objects: 6,
            num_walls: 6,
            receptacle_capacity: 4,
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SceneDoc {
    version: u32,
    width: i32,
    height: i32,
    walls: BTreeSet<Cell>,
    receptacles: Vec<Receptacle>,
    objects: Vec<PlacedObject>,
    held: Option<u32>,
    seed: u64,
}

impl Scene {
    pub fn in_bounds(&self, cell: Cell) -> bool {
        cell.0 >= 0 && cell.1 >= 0 && cell.0 < self.width && cell.1 < self.height
    }

    pub fn is_wall(&self, cell: Cell) -> bool {
        self.walls.contains(&cell)
    }

    pub fn receptacle(&self, id: u32) -> Option<&Receptacle> {
        self.receptacles.iter().find(|r| r.id == id)
    }

    pub fn object(&self, id: u32) -> Option<&PlacedObject> {
        self.objects.iter().find(|o| o.id == id)
    }

    pub fn is_receptacle_cell(&self, cell: Cell) -> bool {
        self.receptacles.iter().any(|r| r.cell == cell)
    }

    /// Cells the agent may occupy.
    pub fn is_traversable(&self, cell: Cell) -> bool {
        self.in_bounds(cell) && !self.is_wall(cell) && !self.is_receptacle_cell(cell)
    }

    pub fn lowest_free_offset(&self, receptacle: u32) -> Option<u32> {
        let cap = self.receptacle(receptacle)?.capacity;
        (0..cap).find(|&off| {
            !self
                .objects
                .iter()
                .any(|o| o.receptacle == receptacle && o.offset == off)
        })
    }

    /// All object ids, including a held one.
    pub fn object_ids(&self) -> Vec<u32> {
        let mut ids: Vec<u32> = self.objects.iter().map(|o| o.id).collect();
        if let Some(h) = self.held {
            ids.push(h);
        }
        ids.sort_unstable();
        ids
    }

    /// Checks the structural invariants; returns a description of the first
    /// violation found.
    pub fn validate(&self) -> Result<(), WorldError> {
        if self.width <= 0 || self.height <= 0 {
            return Err(WorldError::InvalidScene("non-positive dimensions".into()));
        }
        let mut rec_ids = BTreeSet::new();
        for r in &self.receptacles {
            if !self.in_bounds(r.cell) {
                return Err(WorldError::InvalidScene(format!(
                    "receptacle {} out of bounds",
                    r.id
                )));
            }
            if self.is_wall(r.cell) {
                return Err(WorldError::InvalidScene(format!(
                    "receptacle {} on a wall cell",
                    r.id
                )));
            }
            if !rec_ids.insert(r.id) {
                return Err(WorldError::InvalidScene(format!(
                    "duplicate receptacle id {}",
                    r.id
                )));
            }
        }
        for w in &self.walls {
            if !self.in_bounds(*w) {
                return Err(WorldError::InvalidScene("wall out of bounds".into()));
            }
        }
        let mut slots = BTreeSet::new();
        let mut obj_ids = BTreeSet::new();
        for o in &self.objects {
            let rec = self
                .receptacle(o.receptacle)
                .ok_or_else(|| WorldError::InvalidScene(format!("object {} on unknown receptacle", o.id)))?;
            if o.offset >= rec.capacity {
                return Err(WorldError::InvalidScene(format!(
                    "object {} offset beyond capacity",
                    o.id
                )));
            }
            if !slots.insert((o.receptacle, o.offset)) {
                return Err(WorldError::InvalidScene(format!(
                    "slot ({}, {}) occupied twice",
                    o.receptacle, o.offset
                )));
            }
            if !obj_ids.insert(o.id) {
                return Err(WorldError::InvalidScene(format!("duplicate object id {}", o.id)));
            }
        }
        if let Some(h) = self.held {
            if obj_ids.contains(&h) {
                return Err(WorldError::InvalidScene(format!(
                    "held object {h} also placed"
                )));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let doc = SceneDoc {
            version: SCENE_SCHEMA_VERSION,
            width: self.width,
            height: self.height,
            walls: self.walls.clone(),
            receptacles: self.receptacles.clone(),
            objects: self.objects.clone(),
            held: self.held,
            seed: self.seed,
        };
        serde_json::to_string_pretty(&doc).expect("scene serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Scene, WorldError> {
        let doc: SceneDoc =
            serde_json::from_str(text).map_err(|e| WorldError::Document(e.to_string()))?;
        if doc.version != SCENE_SCHEMA_VERSION {
            return Err(WorldError::Document(format!(
                "unsupported scene schema version {}",
                doc.version
            )));
        }
        let scene = Scene {
            width: doc.width,
            height: doc.height,
            walls: doc.walls,
            receptacles: doc.receptacles,
            objects: doc.objects,
            held: doc.held,
            seed: doc.seed,
        };
        scene.validate()?;
        Ok(scene)
    }
}

fn add(a: Cell, b: Cell, scale: i32) -> Cell {
    (a.0 + b.0 * scale, a.1 + b.1 * scale)
}

/// Cells visible from a pose: a forward rectangular frustum where a wall
/// shadows every cell behind it in the same lateral column.
pub fn visible_cells(scene: &Scene, pose: &AgentPose) -> BTreeSet<Cell> {
    let fwd = pose.heading.forward();
    let right = pose.heading.right();
    let mut out = BTreeSet::new();
    for lateral in -FRUSTUM_HALF_WIDTH..=FRUSTUM_HALF_WIDTH {
        for depth in 1..=FRUSTUM_DEPTH {
            let base = add(pose.cell, right, lateral);
            let cell = add(base, fwd, depth);
            if !scene.in_bounds(cell) {
                continue;
            }
            if scene.is_wall(cell) {
                break;
            }
            out.insert(cell);
        }
    }
    out
}

/// Ground-truth detections from a pose: every receptacle on a visible cell,
/// plus every (non-held) object sitting on a visible receptacle.
pub fn observe(scene: &Scene, pose: &AgentPose) -> Observation {
    let visible = visible_cells(scene, pose);
    let fwd = pose.heading.forward();
    let right = pose.heading.right();
    let relative = |cell: Cell| -> Cell {
        let d = (cell.0 - pose.cell.0, cell.1 - pose.cell.1);
        (d.0 * fwd.0 + d.1 * fwd.1, d.0 * right.0 + d.1 * right.1)
    };
    let mut detections = Vec::new();
    for r in &scene.receptacles {
        if visible.contains(&r.cell) {
            detections.push(Detection {
                entity: EntityId::Receptacle(r.id),
                region: vec![relative(r.cell)],
            });
            for o in &scene.objects {
                if o.receptacle == r.id {
                    detections.push(Detection {
                        entity: EntityId::Object(o.id),
                        region: vec![relative(r.cell)],
                    });
                }
            }
        }
    }
    detections.sort_by_key(|d| d.entity);
    Observation {
        pose: *pose,
        detections,
    }
}

/// Applies one action. World failures (blocked moves, refused pick/place)
/// return an unchanged state with a failure status; malformed actions
/// (unknown ids) are errors.
pub fn step(
    scene: &Scene,
    pose: &AgentPose,
    action: &Action,
) -> Result<(Scene, AgentPose, StepStatus), WorldError> {
    let mut scene = scene.clone();
    let mut pose = *pose;
    let status = match action {
        Action::RotateLeft => {
            pose.heading = pose.heading.counterclockwise();
            StepStatus::Ok
        }
        Action::RotateRight => {
            pose.heading = pose.heading.clockwise();
            StepStatus::Ok
        }
        Action::MoveForward | Action::MoveBack | Action::MoveLeft | Action::MoveRight => {
            let fwd = pose.heading.forward();
            let right = pose.heading.right();
            let delta = match action {
                Action::MoveForward => fwd,
                Action::MoveBack => (-fwd.0, -fwd.1),
                Action::MoveRight => right,
                _ => (-right.0, -right.1),
            };
            let target = (pose.cell.0 + delta.0, pose.cell.1 + delta.1);
            if scene.is_traversable(target) {
                pose.cell = target;
                StepStatus::Ok
            } else {
                StepStatus::Blocked
            }
        }
        Action::PickUp(id) => {
            if scene.object(*id).is_none() && scene.held != Some(*id) {
                return Err(WorldError::UnknownObject(*id));
            }
            let detected = observe(&scene, &pose)
                .detections
                .iter()
                .any(|d| d.entity == EntityId::Object(*id));
            if scene.held.is_none() && detected {
                scene.objects.retain(|o| o.id != *id);
                scene.held = Some(*id);
                StepStatus::Ok
            } else {
                StepStatus::CannotPickUp
            }
        }
        Action::Place(rid) => {
            if scene.receptacle(*rid).is_none() {
                return Err(WorldError::UnknownReceptacle(*rid));
            }
            let visible = observe(&scene, &pose)
                .detections
                .iter()
                .any(|d| d.entity == EntityId::Receptacle(*rid));
            match (scene.held, visible, scene.lowest_free_offset(*rid)) {
                (Some(obj), true, Some(offset)) => {
                    scene.objects.push(PlacedObject {
                        id: obj,
                        receptacle: *rid,
                        offset,
                    });
                    scene.held = None;
                    StepStatus::Ok
                }
                _ => StepStatus::CannotPlace,
            }
        }
    };
    Ok((scene, pose, status))
}

/// Deterministic start pose: the first traversable cell in row-major order,
/// facing north.
pub fn default_start_pose(scene: &Scene) -> Result<AgentPose, WorldError> {
    for y in 0..scene.height {
        for x in 0..scene.width {
            if scene.is_traversable((x, y)) {
                return Ok(AgentPose {
                    cell: (x, y),
                    heading: Heading::North,
                });
            }
        }
    }
    Err(WorldError::InvalidScene("no traversable cell".into()))
}

fn traversable_connected(scene: &Scene) -> bool {
    let cells: Vec<Cell> = (0..scene.height)
        .flat_map(|y| (0..scene.width).map(move |x| (x, y)))
        .filter(|&c| scene.is_traversable(c))
        .collect();
    let Some(&start) = cells.first() else {
        return false;
    };
    let mut seen = BTreeSet::from([start]);
    let mut queue = std::collections::VecDeque::from([start]);
    while let Some(c) = queue.pop_front() {
        for d in [(0, -1), (1, 0), (0, 1), (-1, 0)] {
            let n = (c.0 + d.0, c.1 + d.1);
            if scene.is_traversable(n) && seen.insert(n) {
                queue.push_back(n);
            }
        }
    }
    seen.len() == cells.len()
}

fn every_receptacle_observable(scene: &Scene) -> bool {
    scene.receptacles.iter().all(|r| {
        (0..scene.height)
            .flat_map(|y| (0..scene.width).map(move |x| (x, y)))
            .filter(|&c| scene.is_traversable(c))
            .any(|cell| {
                Heading::ALL.iter().any(|&heading| {
                    visible_cells(scene, &AgentPose { cell, heading }).contains(&r.cell)
                })
            })
    })
}

/// Generates a deterministic scene for `(config, seed)`. Retries internally
/// (with seeds derived from `seed`) until the traversable region is
/// connected and every receptacle is observable.
pub fn generate_scene(config: &SceneConfig, seed: u64) -> Result<Scene, WorldError> {
    let total_cells = (config.width as i64) * (config.height as i64);
    if config.width <= 0
        || config.height <= 0
        || (config.num_walls + config.num_receptacles) as i64 >= total_cells
        || config.num_objects > config.num_receptacles * config.receptacle_capacity
        || config.num_receptacles == 0
    {
        return Err(WorldError::InfeasibleCounts);
    }

    for attempt in 0..64u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(attempt.wrapping_mul(0x9e3779b97f4a7c15)));
        let mut free: Vec<Cell> = (0..config.height)
            .flat_map(|y| (0..config.width).map(move |x| (x, y)))
            .collect();
        free.shuffle(&mut rng);

        let walls: BTreeSet<Cell> = free.drain(..config.num_walls as usize).collect();
        let receptacles: Vec<Receptacle> = free
            .drain(..config.num_receptacles as usize)
            .enumerate()
            .map(|(i, cell)| Receptacle {
                id: i as u32,
                cell,
                capacity: config.receptacle_capacity,
            })
            .collect();

        let mut slots: Vec<(u32, u32)> = receptacles
            .iter()
            .flat_map(|r| (0..r.capacity).map(move |off| (r.id, off)))
            .collect();
        slots.shuffle(&mut rng);
        let objects: Vec<PlacedObject> = slots
            .drain(..config.num_objects as usize)
            .enumerate()
            .map(|(i, (receptacle, offset))| PlacedObject {
                id: i as u32,
                receptacle,
                offset,
            })
            .collect();

        let scene = Scene {
            width: config.width,
            height: config.height,
            walls,
            receptacles,
            objects,
            held: None,
            seed,
        };
        if scene.validate().is_ok()
            && traversable_connected(&scene)
            && every_receptacle_observable(&scene)
        {
            return Ok(scene);
        }
    }
    Err(WorldError::GenerationFailed { seed })
}

/// Moves `k` distinct objects each onto a different receptacle, returning
/// the shuffled scene and the evaluator-only ground-truth moved set.
pub fn shuffle(scene: &Scene, k: usize, seed: u64) -> Result<(Scene, Vec<MovedObject>), WorldError> {
    if k == 0 || k > scene.objects.len() || scene.receptacles.len() < 2 {
        return Err(WorldError::InfeasibleShuffle {
            k,
            objects: scene.objects.len(),
            receptacles: scene.receptacles.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ids: Vec<u32> = scene.objects.iter().map(|o| o.id).collect();
    ids.sort_unstable();
    ids.shuffle(&mut rng);
    let chosen: Vec<u32> = ids.into_iter().take(k).collect();

    let mut out = scene.clone();
    let mut moved = Vec::with_capacity(k);
    for id in chosen {
        let from = out.object(id).expect("chosen from scene").receptacle;
        let candidates: Vec<u32> = out
            .receptacles
            .iter()
            .map(|r| r.id)
            .filter(|&r| r != from && out.lowest_free_offset(r).is_some())
            .collect();
        if candidates.is_empty() {
            return Err(WorldError::InfeasibleShuffle {
                k,
                objects: scene.objects.len(),
                receptacles: scene.receptacles.len(),
            });
        }
        let to = candidates[rng.gen_range(0..candidates.len())];
        let offset = out.lowest_free_offset(to).expect("candidate has space");
        let obj = out.objects.iter_mut().find(|o| o.id == id).expect("placed");
        obj.receptacle = to;
        obj.offset = offset;
        moved.push(MovedObject { id, from, to });
    }
    moved.sort_by_key(|m| m.id);
    Ok((out, moved))
}
