//! Embodied state graph: one state per agent pose, transitions labeled by
//! actions, cross-trajectory fusion, and breadth-first planning to any
//! state observing a target scene node.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::csr::NodeId;
use crate::world::{Action, AgentPose};

pub const STATE_GRAPH_SCHEMA_VERSION: u32 = 1;

pub type StateId = u32;

#[derive(Debug, Error)]
pub enum EmbodiedError {
    #[error("unknown state {0}")]
    UnknownState(StateId),
    #[error("conflicting transition from state {from} via {action:?}")]
    ConflictingTransition { from: StateId, action: Action },
    #[error("cannot record into an empty graph without an initial pose")]
    EmptyGraph,
    #[error("initial poses differ; trajectories must share a start")]
    InitialPoseMismatch,
    #[error("no state observes node {0}")]
    NodeNeverObserved(NodeId),
    #[error("node {node} is observed only at states unreachable from {start}")]
    NodeUnreachable { node: NodeId, start: StateId },
    #[error("state graph document error: {0}")]
    Document(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct State {
    pub pose: AgentPose,
    pub observed: BTreeSet<NodeId>,
}

/// Navigation plan recovered from the state graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Plan {
    pub actions: Vec<Action>,
    pub goal_state: StateId,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct StateGraph {
    states: BTreeMap<StateId, State>,
    by_pose: HashMap<AgentPose, StateId>,
    transitions: BTreeMap<(StateId, Action), StateId>,
    initial: Option<StateId>,
}

impl StateGraph {
    pub fn new() -> Self {
        StateGraph::default()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn initial(&self) -> Option<StateId> {
        self.initial
    }

    pub fn state(&self, id: StateId) -> Option<&State> {
        self.states.get(&id)
    }

    pub fn states(&self) -> &BTreeMap<StateId, State> {
        &self.states
    }

    pub fn transitions(&self) -> &BTreeMap<(StateId, Action), StateId> {
        &self.transitions
    }

    pub fn state_for_pose(&self, pose: &AgentPose) -> Option<StateId> {
        self.by_pose.get(pose).copied()
    }

    fn intern_pose(&mut self, pose: AgentPose) -> StateId {
        if let Some(&id) = self.by_pose.get(&pose) {
            return id;
        }
        let id = self.states.keys().next_back().map_or(0, |&k| k + 1);
        self.states.insert(
            id,
            State {
                pose,
                observed: BTreeSet::new(),
            },
        );
        self.by_pose.insert(pose, id);
        id
    }

    /// Records one observation: creates (or revisits) the state for `pose`,
    /// unions the observed node ids into it, and inserts the transition
    /// from the previous state. The first record passes `prev = None`.
    pub fn record(
        &mut self,
        prev: Option<(StateId, Action)>,
        pose: AgentPose,
        observed: impl IntoIterator<Item = NodeId>,
    ) -> Result<StateId, EmbodiedError> {
        match (prev, self.initial) {
            (None, None) => {
                let id = self.intern_pose(pose);
                self.initial = Some(id);
                self.states.get_mut(&id).expect("just interned").observed.extend(observed);
                Ok(id)
            }
            (Some((from, action)), Some(_)) => {
                if !self.states.contains_key(&from) {
                    return Err(EmbodiedError::UnknownState(from));
                }
                let id = self.intern_pose(pose);
                if let Some(&existing) = self.transitions.get(&(from, action)) {
                    if existing != id {
                        return Err(EmbodiedError::ConflictingTransition { from, action });
                    }
                } else {
                    self.transitions.insert((from, action), id);
                }
                self.states.get_mut(&id).expect("interned").observed.extend(observed);
                Ok(id)
            }
            (None, Some(initial)) => {
                // Re-recording the start of a trajectory on a shared graph.
                let id = self.intern_pose(pose);
                if id != initial {
                    return Err(EmbodiedError::InitialPoseMismatch);
                }
                self.states.get_mut(&id).expect("interned").observed.extend(observed);
                Ok(id)
            }
            (Some((from, _)), None) => Err(EmbodiedError::UnknownState(from)),
        }
    }

    /// Checks endpoint existence and initial-state presence.
    pub fn validate(&self) -> Result<(), EmbodiedError> {
        let initial = self.initial.ok_or(EmbodiedError::EmptyGraph)?;
        if !self.states.contains_key(&initial) {
            return Err(EmbodiedError::UnknownState(initial));
        }
        for (&(from, action), &to) in &self.transitions {
            if !self.states.contains_key(&from) {
                return Err(EmbodiedError::UnknownState(from));
            }
            if !self.states.contains_key(&to) {
                return Err(EmbodiedError::UnknownState(to));
            }
            let _ = action;
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let doc = StateGraphDoc {
            version: STATE_GRAPH_SCHEMA_VERSION,
            states: self
                .states
                .iter()
                .map(|(&id, s)| StateDoc {
                    id,
                    pose: s.pose,
                    observed: s.observed.iter().copied().collect(),
                })
                .collect(),
            transitions: self
                .transitions
                .iter()
                .map(|(&(from, action), &to)| (from, action, to))
                .collect(),
            initial: self.initial.expect("serialize non-empty graphs"),
        };
        serde_json::to_string_pretty(&doc).expect("state graph serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<StateGraph, EmbodiedError> {
        let doc: StateGraphDoc =
            serde_json::from_str(text).map_err(|e| EmbodiedError::Document(e.to_string()))?;
        if doc.version != STATE_GRAPH_SCHEMA_VERSION {
            return Err(EmbodiedError::Document(format!(
                "unsupported state graph schema version {}",
                doc.version
            )));
        }
        let mut graph = StateGraph {
            states: doc
                .states
                .iter()
                .map(|s| {
                    (
                        s.id,
                        State {
                            pose: s.pose,
                            observed: s.observed.iter().copied().collect(),
                        },
                    )
                })
                .collect(),
            by_pose: doc.states.iter().map(|s| (s.pose, s.id)).collect(),
            transitions: doc
                .transitions
                .into_iter()
                .map(|(from, action, to)| ((from, action), to))
                .collect(),
            initial: Some(doc.initial),
        };
        graph.validate()?;
        // Re-derive the pose index deterministically.
        graph.by_pose = graph.states.iter().map(|(&id, s)| (s.pose, id)).collect();
        Ok(graph)
    }
}

#[derive(Serialize, Deserialize)]
struct StateDoc {
    id: StateId,
    pose: AgentPose,
    observed: Vec<NodeId>,
}

#[derive(Serialize, Deserialize)]
struct StateGraphDoc {
    version: u32,
    states: Vec<StateDoc>,
    transitions: Vec<(StateId, Action, StateId)>,
    initial: StateId,
}

/// Unifies two trajectories into one embodied graph, using the shared
/// initial pose as the point of correspondence. States with equal poses
/// collapse into one; observed node sets union.
pub fn fuse(walk: &StateGraph, un: &StateGraph) -> Result<StateGraph, EmbodiedError> {
    let wi = walk.initial.ok_or(EmbodiedError::EmptyGraph)?;
    let ui = un.initial.ok_or(EmbodiedError::EmptyGraph)?;
    if walk.states[&wi].pose != un.states[&ui].pose {
        return Err(EmbodiedError::InitialPoseMismatch);
    }

    let mut fused = StateGraph::new();
    for source in [walk, un] {
        let mut map: BTreeMap<StateId, StateId> = BTreeMap::new();
        for (&id, state) in &source.states {
            let fid = fused.intern_pose(state.pose);
            fused
                .states
                .get_mut(&fid)
                .expect("interned")
                .observed
                .extend(state.observed.iter().copied());
            map.insert(id, fid);
        }
        for (&(from, action), &to) in &source.transitions {
            let key = (map[&from], action);
            let target = map[&to];
            if let Some(&existing) = fused.transitions.get(&key) {
                if existing != target {
                    return Err(EmbodiedError::ConflictingTransition {
                        from: key.0,
                        action,
                    });
                }
            } else {
                fused.transitions.insert(key, target);
            }
        }
    }
    fused.initial = fused.by_pose.get(&walk.states[&wi].pose).copied();
    Ok(fused)
}

/// Breadth-first search from `start` to the nearest state whose observed
/// set contains `target`. Ties break to the lowest state id; transitions
/// expand in action declaration order.
pub fn plan_to_node(
    graph: &StateGraph,
    start: StateId,
    target: NodeId,
) -> Result<Plan, EmbodiedError> {
    if !graph.states.contains_key(&start) {
        return Err(EmbodiedError::UnknownState(start));
    }
    if !graph.states.values().any(|s| s.observed.contains(&target)) {
        return Err(EmbodiedError::NodeNeverObserved(target));
    }

    // Adjacency in (state, action-order) so BFS expansion is deterministic.
    let mut adjacency: BTreeMap<StateId, Vec<(Action, StateId)>> = BTreeMap::new();
    for (&(from, action), &to) in &graph.transitions {
        adjacency.entry(from).or_default().push((action, to));
    }

    let mut parent: HashMap<StateId, (StateId, Action)> = HashMap::new();
    let mut seen = BTreeSet::from([start]);
    let mut queue = VecDeque::from([start]);
    let mut goal = None;
    if graph.states[&start].observed.contains(&target) {
        goal = Some(start);
    }
    while goal.is_none() {
        // Expand one BFS layer at a time so the nearest goal wins and
        // equal-depth goals break ties by lowest state id.
        let layer: Vec<StateId> = queue.drain(..).collect();
        if layer.is_empty() {
            break;
        }
        let mut found: Option<StateId> = None;
        for &s in &layer {
            for &(action, next) in adjacency.get(&s).map_or(&[][..], |v| v) {
                if seen.insert(next) {
                    parent.insert(next, (s, action));
                    queue.push_back(next);
                    if graph.states[&next].observed.contains(&target) {
                        found = Some(match found {
                            Some(g) => g.min(next),
                            None => next,
                        });
                    }
                }
            }
        }
        goal = found;
    }

    let goal = goal.ok_or(EmbodiedError::NodeUnreachable {
        node: target,
        start,
    })?;
    let mut actions = Vec::new();
    let mut cur = goal;
    while cur != start {
        let (prev, action) = parent[&cur];
        actions.push(action);
        cur = prev;
    }
    actions.reverse();
    Ok(Plan {
        actions,
        goal_state: goal,
    })
}
