//! Continuous scene representation: local graphs from single observations,
//! similarity-based aggregation into a global graph, and between-trajectory
//! change detection.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numerics::{cos_sim, max_assignment, FeatureVec, NumericsError, ScoreMatrix};
use crate::world::EntityId;

pub const GRAPH_SCHEMA_VERSION: u32 = 1;

pub type NodeId = u64;

#[derive(Debug, Error)]
pub enum CsrError {
    #[error("feature length mismatch: {left} vs {right}")]
    DimMismatch { left: usize, right: usize },
    #[error("degenerate merge: features cancel to zero")]
    DegenerateMerge,
    #[error("threshold {value} outside [-1, 1]")]
    BadThreshold { value: f64 },
    #[error("invalid graph: {0}")]
    InvalidGraph(String),
    #[error("graph document error: {0}")]
    Document(String),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

/// One node of a local graph: the scene feature for the self pair plus the
/// layout-invariant identity feature. `entity` is ground truth carried for
/// evaluators only; matching never reads it.
#[derive(Debug, Clone)]
pub struct LocalNode {
    pub scene_feat: FeatureVec,
    pub identity_feat: FeatureVec,
    pub entity: EntityId,
}

/// Scene graph fragment extracted from one egocentric observation:
/// n nodes and n²−n directed edges.
#[derive(Debug, Clone, Default)]
pub struct LocalGraph {
    pub nodes: Vec<LocalNode>,
    pub edges: BTreeMap<(usize, usize), FeatureVec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsrNode {
    pub scene_feat: FeatureVec,
    pub identity_feat: FeatureVec,
    pub merge_count: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsrEdge {
    pub feat: FeatureVec,
    pub merge_count: u32,
}

/// Global continuous scene representation built up over a trajectory.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CsrGraph {
    nodes: BTreeMap<NodeId, CsrNode>,
    edges: BTreeMap<(NodeId, NodeId), CsrEdge>,
    next_id: NodeId,
}

/// How one local graph landed in the global graph.
#[derive(Debug, Clone)]
pub struct MatchReport {
    /// (local index, global node id, match score) for true matches.
    pub matched: Vec<(usize, NodeId, f64)>,
    /// (local index, freshly assigned node id) for everything else.
    pub new_nodes: Vec<(usize, NodeId)>,
}

impl MatchReport {
    /// Global node id the given local index ended up as.
    pub fn node_for_local(&self, idx: usize) -> Option<NodeId> {
        self.matched
            .iter()
            .find(|(i, _, _)| *i == idx)
            .map(|(_, id, _)| *id)
            .or_else(|| {
                self.new_nodes
                    .iter()
                    .find(|(i, _)| *i == idx)
                    .map(|(_, id)| *id)
            })
    }
}

/// Count-weighted running mean of unit features, renormalized.
pub fn merge_feature(
    old: &FeatureVec,
    count: u32,
    new: &FeatureVec,
) -> Result<FeatureVec, CsrError> {
    if old.dim() != new.dim() {
        return Err(CsrError::DimMismatch {
            left: old.dim(),
            right: new.dim(),
        });
    }
    let c = count as f64;
    let mean: Vec<f64> = old
        .as_slice()
        .iter()
        .zip(new.as_slice())
        .map(|(o, n)| (c * o + n) / (c + 1.0))
        .collect();
    FeatureVec::normalize(&mean).map_err(|_| CsrError::DegenerateMerge)
}

fn check_threshold(value: f64) -> Result<(), CsrError> {
    if !(-1.0..=1.0).contains(&value) || !value.is_finite() {
        return Err(CsrError::BadThreshold { value });
    }
    Ok(())
}

impl CsrGraph {
    pub fn new() -> Self {
        CsrGraph::default()
    }

    pub fn nodes(&self) -> &BTreeMap<NodeId, CsrNode> {
        &self.nodes
    }

    pub fn edges(&self) -> &BTreeMap<(NodeId, NodeId), CsrEdge> {
        &self.edges
    }

    pub fn node(&self, id: NodeId) -> Option<&CsrNode> {
        self.nodes.get(&id)
    }

    pub fn next_id(&self) -> NodeId {
        self.next_id
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Folds one local graph into the global graph.
    ///
    /// Scene node features are matched by cosine similarity through a
    /// maximal linear assignment; assigned pairs scoring above
    /// `node_threshold` merge (count-weighted mean), everything else enters
    /// as new nodes. Local edges follow the node correspondence: an existing
    /// edge merges, a new relationship is added.
    pub fn ingest(
        &mut self,
        local: &LocalGraph,
        node_threshold: f64,
    ) -> Result<MatchReport, CsrError> {
        check_threshold(node_threshold)?;
        if let (Some(first), Some((_, any))) = (local.nodes.first(), self.nodes.iter().next()) {
            if first.scene_feat.dim() != any.scene_feat.dim() {
                return Err(CsrError::DimMismatch {
                    left: any.scene_feat.dim(),
                    right: first.scene_feat.dim(),
                });
            }
        }

        let global_ids: Vec<NodeId> = self.nodes.keys().copied().collect();
        let mut matched = Vec::new();
        let mut assigned_locals = vec![false; local.nodes.len()];

        if !global_ids.is_empty() && !local.nodes.is_empty() {
            let mut scores = Vec::with_capacity(global_ids.len() * local.nodes.len());
            for gid in &global_ids {
                let g = &self.nodes[gid];
                for l in &local.nodes {
                    scores.push(cos_sim(&g.scene_feat, &l.scene_feat)?);
                }
            }
            let matrix = ScoreMatrix::new(global_ids.len(), local.nodes.len(), scores)?;
            let assignment = max_assignment(&matrix)?;
            for (row, col) in assignment.pairs {
                let score = matrix.get(row, col);
                if score > node_threshold {
                    let gid = global_ids[row];
                    let node = self.nodes.get_mut(&gid).expect("known id");
                    node.scene_feat =
                        merge_feature(&node.scene_feat, node.merge_count, &local.nodes[col].scene_feat)?;
                    node.identity_feat = merge_feature(
                        &node.identity_feat,
                        node.merge_count,
                        &local.nodes[col].identity_feat,
                    )?;
                    node.merge_count += 1;
                    matched.push((col, gid, score));
                    assigned_locals[col] = true;
                }
            }
        }

        let mut new_nodes = Vec::new();
        for (idx, l) in local.nodes.iter().enumerate() {
            if !assigned_locals[idx] {
                let id = self.next_id;
                self.next_id += 1;
                self.nodes.insert(
                    id,
                    CsrNode {
                        scene_feat: l.scene_feat.clone(),
                        identity_feat: l.identity_feat.clone(),
                        merge_count: 1,
                    },
                );
                new_nodes.push((idx, id));
            }
        }

        let report = MatchReport { matched, new_nodes };
        for (&(a, b), feat) in &local.edges {
            let ga = report.node_for_local(a).ok_or_else(|| {
                CsrError::InvalidGraph(format!("edge references missing local node {a}"))
            })?;
            let gb = report.node_for_local(b).ok_or_else(|| {
                CsrError::InvalidGraph(format!("edge references missing local node {b}"))
            })?;
            match self.edges.get_mut(&(ga, gb)) {
                Some(edge) => {
                    edge.feat = merge_feature(&edge.feat, edge.merge_count, feat)?;
                    edge.merge_count += 1;
                }
                None => {
                    self.edges.insert(
                        (ga, gb),
                        CsrEdge {
                            feat: feat.clone(),
                            merge_count: 1,
                        },
                    );
                }
            }
        }
        Ok(report)
    }

    /// Structural invariants: unit-norm features, existing edge endpoints,
    /// no self-loops, positive merge counts.
    pub fn validate(&self) -> Result<(), CsrError> {
        for (id, n) in &self.nodes {
            for f in [&n.scene_feat, &n.identity_feat] {
                let norm: f64 = f.as_slice().iter().map(|x| x * x).sum::<f64>().sqrt();
                if (norm - 1.0).abs() > 1e-9 {
                    return Err(CsrError::InvalidGraph(format!("node {id} not unit-norm")));
                }
            }
            if n.merge_count == 0 {
                return Err(CsrError::InvalidGraph(format!("node {id} zero count")));
            }
            if *id >= self.next_id {
                return Err(CsrError::InvalidGraph(format!("node {id} beyond next_id")));
            }
        }
        for ((a, b), e) in &self.edges {
            if a == b {
                return Err(CsrError::InvalidGraph(format!("self-loop at {a}")));
            }
            if !self.nodes.contains_key(a) || !self.nodes.contains_key(b) {
                return Err(CsrError::InvalidGraph(format!("dangling edge ({a}, {b})")));
            }
            if e.merge_count == 0 {
                return Err(CsrError::InvalidGraph(format!("edge ({a}, {b}) zero count")));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let doc = GraphDoc {
            version: GRAPH_SCHEMA_VERSION,
            nodes: self
                .nodes
                .iter()
                .map(|(&id, n)| NodeDoc {
                    id,
                    node: n.clone(),
                })
                .collect(),
            edges: self
                .edges
                .iter()
                .map(|(&(from, to), e)| EdgeDoc {
                    from,
                    to,
                    edge: e.clone(),
                })
                .collect(),
            next_id: self.next_id,
        };
        serde_json::to_string_pretty(&doc).expect("graph serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<CsrGraph, CsrError> {
        let doc: GraphDoc =
            serde_json::from_str(text).map_err(|e| CsrError::Document(e.to_string()))?;
        if doc.version != GRAPH_SCHEMA_VERSION {
            return Err(CsrError::Document(format!(
                "unsupported graph schema version {}",
                doc.version
            )));
        }
        let graph = CsrGraph {
            nodes: doc.nodes.into_iter().map(|n| (n.id, n.node)).collect(),
            edges: doc
                .edges
                .into_iter()
                .map(|e| ((e.from, e.to), e.edge))
                .collect(),
            next_id: doc.next_id,
        };
        graph.validate()?;
        Ok(graph)
    }
}

#[derive(Serialize, Deserialize)]
struct NodeDoc {
    id: NodeId,
    #[serde(flatten)]
    node: CsrNode,
}

#[derive(Serialize, Deserialize)]
struct EdgeDoc {
    from: NodeId,
    to: NodeId,
    #[serde(flatten)]
    edge: CsrEdge,
}

#[derive(Serialize, Deserialize)]
struct GraphDoc {
    version: u32,
    nodes: Vec<NodeDoc>,
    edges: Vec<EdgeDoc>,
    next_id: NodeId,
}

/// A cross-trajectory object correspondence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correspondence {
    pub walk: NodeId,
    pub un: NodeId,
    pub identity_score: f64,
    pub scene_score: f64,
    /// Set when the scene features diverged below the moved threshold.
    pub moved: bool,
}

#[derive(Debug, Clone, Default)]
pub struct ChangeReport {
    pub correspondences: Vec<Correspondence>,
    pub unmatched_walk: Vec<NodeId>,
    pub unmatched_un: Vec<NodeId>,
}

impl ChangeReport {
    pub fn moved_pairs(&self) -> Vec<(NodeId, NodeId)> {
        self.correspondences
            .iter()
            .filter(|c| c.moved)
            .map(|c| (c.walk, c.un))
            .collect()
    }
}

/// Matches object identities between two trajectories and flags moved
/// objects: a correspondence requires identity similarity above
/// `obj_threshold`; it is flagged moved when the matched scene node
/// similarity falls strictly below `moved_threshold`.
pub fn detect_changes(
    walk: &CsrGraph,
    un: &CsrGraph,
    obj_threshold: f64,
    moved_threshold: f64,
) -> Result<ChangeReport, CsrError> {
    check_threshold(obj_threshold)?;
    check_threshold(moved_threshold)?;
    let walk_ids: Vec<NodeId> = walk.nodes.keys().copied().collect();
    let un_ids: Vec<NodeId> = un.nodes.keys().copied().collect();
    if walk_ids.is_empty() || un_ids.is_empty() {
        return Ok(ChangeReport {
            correspondences: vec![],
            unmatched_walk: walk_ids,
            unmatched_un: un_ids,
        });
    }

    let mut scores = Vec::with_capacity(walk_ids.len() * un_ids.len());
    for w in &walk_ids {
        for u in &un_ids {
            scores.push(cos_sim(
                &walk.nodes[w].identity_feat,
                &un.nodes[u].identity_feat,
            )?);
        }
    }
    let matrix = ScoreMatrix::new(walk_ids.len(), un_ids.len(), scores)?;
    let assignment = max_assignment(&matrix)?;

    let mut correspondences = Vec::new();
    let mut matched_walk = std::collections::BTreeSet::new();
    let mut matched_un = std::collections::BTreeSet::new();
    for (row, col) in assignment.pairs {
        let identity_score = matrix.get(row, col);
        if identity_score > obj_threshold {
            let w = walk_ids[row];
            let u = un_ids[col];
            let scene_score = cos_sim(&walk.nodes[&w].scene_feat, &un.nodes[&u].scene_feat)?;
            correspondences.push(Correspondence {
                walk: w,
                un: u,
                identity_score,
                scene_score,
                moved: scene_score < moved_threshold,
            });
            matched_walk.insert(w);
            matched_un.insert(u);
        }
    }
    Ok(ChangeReport {
        correspondences,
        unmatched_walk: walk_ids
            .into_iter()
            .filter(|id| !matched_walk.contains(id))
            .collect(),
        unmatched_un: un_ids
            .into_iter()
            .filter(|id| !matched_un.contains(id))
            .collect(),
    })
}
