//! The unified episodic-semantic memory graph.
//!
//! Episodic nodes hold individual turns; semantic nodes hold concepts
//! distilled from consolidation windows. Node ids come from one counter, so
//! id order is insertion order for both partitions.

mod consolidate;
mod maintenance;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

pub use consolidate::{ConsolidationReport, ItemOutcome};

use crate::embedding::{Embedding, EmbeddingProvider};
use crate::error::GraphError;
use crate::extract::Category;
use crate::params::HyperParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u64);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodicNode {
    pub id: NodeId,
    pub content: String,
    pub embedding: Embedding,
    pub timestamp: f64,
    pub dormancy_streak: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SemanticNode {
    pub id: NodeId,
    pub name: String,
    pub category: Category,
    pub embedding: Embedding,
    pub attributes: Vec<String>,
    /// Highest extractor confidence seen for this concept. Informational only.
    pub confidence: f64,
    pub dormancy_streak: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NodeKind {
    Episodic,
    Semantic,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Episodic(EpisodicNode),
    Semantic(SemanticNode),
}

impl Node {
    pub fn id(&self) -> NodeId {
        match self {
            Node::Episodic(n) => n.id,
            Node::Semantic(n) => n.id,
        }
    }

    pub fn kind(&self) -> NodeKind {
        match self {
            Node::Episodic(_) => NodeKind::Episodic,
            Node::Semantic(_) => NodeKind::Semantic,
        }
    }

    pub fn embedding(&self) -> &Embedding {
        match self {
            Node::Episodic(n) => &n.embedding,
            Node::Semantic(n) => &n.embedding,
        }
    }

    pub fn timestamp(&self) -> Option<f64> {
        match self {
            Node::Episodic(n) => Some(n.timestamp),
            Node::Semantic(_) => None,
        }
    }

    pub fn dormancy_streak(&self) -> u32 {
        match self {
            Node::Episodic(n) => n.dormancy_streak,
            Node::Semantic(n) => n.dormancy_streak,
        }
    }

    fn dormancy_streak_mut(&mut self) -> &mut u32 {
        match self {
            Node::Episodic(n) => &mut n.dormancy_streak,
            Node::Semantic(n) => &mut n.dormancy_streak,
        }
    }

    /// Text used for lexical indexing and for evidence rendering.
    pub fn text(&self) -> String {
        match self {
            Node::Episodic(n) => n.content.clone(),
            Node::Semantic(n) => {
                let mut s = n.name.clone();
                for a in &n.attributes {
                    s.push_str("; ");
                    s.push_str(a);
                }
                s
            }
        }
    }

    pub fn as_episodic(&self) -> Option<&EpisodicNode> {
        match self {
            Node::Episodic(n) => Some(n),
            Node::Semantic(_) => None,
        }
    }

    pub fn as_semantic(&self) -> Option<&SemanticNode> {
        match self {
            Node::Semantic(n) => Some(n),
            Node::Episodic(_) => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EdgeKind {
    Temporal,
    Abstraction,
    Association,
}

impl EdgeKind {
    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Self> {
        [
            EdgeKind::Temporal,
            EdgeKind::Abstraction,
            EdgeKind::Association,
        ]
        .get(code as usize)
        .copied()
    }
}

/// Identity of an edge: at most one edge exists per key.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EdgeKey {
    pub src: NodeId,
    pub dst: NodeId,
    pub kind: EdgeKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub src: NodeId,
    pub dst: NodeId,
    pub kind: EdgeKind,
    pub weight: f64,
    /// Consolidation index at creation; newer edges win pruning ties.
    pub created_at: u64,
}

impl Edge {
    pub fn key(&self) -> EdgeKey {
        EdgeKey {
            src: self.src,
            dst: self.dst,
            kind: self.kind,
        }
    }
}

/// Nodes removed by garbage collection, kept with their incident edges.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Archive {
    pub nodes: BTreeMap<NodeId, Node>,
    pub edges: BTreeMap<EdgeKey, Edge>,
}

/// `e^(-rho |tau_i - tau_j|)`.
pub fn temporal_edge_weight(tau_i: f64, tau_j: f64, params: &HyperParams) -> f64 {
    (-params.rho * (tau_i - tau_j).abs()).exp()
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MemoryGraph {
    nodes: BTreeMap<NodeId, Node>,
    edges: BTreeMap<EdgeKey, Edge>,
    incoming: BTreeMap<NodeId, BTreeSet<EdgeKey>>,
    outgoing: BTreeMap<NodeId, BTreeSet<EdgeKey>>,
    archive: Archive,
    turn_counter: u64,
    consolidation_counter: u64,
    next_id: u64,
    /// Latest episodic timestamp ever inserted, archived episodes included.
    latest_timestamp: Option<f64>,
}

impl MemoryGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn node(&self, id: NodeId) -> Option<&Node> {
        self.nodes.get(&id)
    }

    pub fn contains(&self, id: NodeId) -> bool {
        self.nodes.contains_key(&id)
    }

    /// Live nodes in id order.
    pub fn nodes(&self) -> impl Iterator<Item = &Node> {
        self.nodes.values()
    }

    pub fn node_ids(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes.keys().copied()
    }

    pub fn episodes(&self) -> impl Iterator<Item = &EpisodicNode> {
        self.nodes.values().filter_map(Node::as_episodic)
    }

    pub fn semantic_nodes(&self) -> impl Iterator<Item = &SemanticNode> {
        self.nodes.values().filter_map(Node::as_semantic)
    }

    pub fn edges(&self) -> impl Iterator<Item = &Edge> {
        self.edges.values()
    }

    pub fn edge(&self, key: &EdgeKey) -> Option<&Edge> {
        self.edges.get(key)
    }

    pub fn incoming(&self, id: NodeId) -> impl Iterator<Item = &Edge> {
        self.incoming
            .get(&id)
            .into_iter()
            .flatten()
            .map(|k| &self.edges[k])
    }

    pub fn outgoing(&self, id: NodeId) -> impl Iterator<Item = &Edge> {
        self.outgoing
            .get(&id)
            .into_iter()
            .flatten()
            .map(|k| &self.edges[k])
    }

    pub fn in_degree(&self, id: NodeId) -> usize {
        self.incoming.get(&id).map_or(0, BTreeSet::len)
    }

    /// Out-degree of `id`.
    pub fn fan(&self, id: NodeId) -> usize {
        self.outgoing.get(&id).map_or(0, BTreeSet::len)
    }

    pub(crate) fn nodes_map(&self) -> &BTreeMap<NodeId, Node> {
        &self.nodes
    }

    pub(crate) fn edges_map(&self) -> &BTreeMap<EdgeKey, Edge> {
        &self.edges
    }

    pub fn archive(&self) -> &Archive {
        &self.archive
    }

    pub fn turn_counter(&self) -> u64 {
        self.turn_counter
    }

    pub fn consolidation_counter(&self) -> u64 {
        self.consolidation_counter
    }

    /// Next id to be assigned.
    pub fn next_id(&self) -> u64 {
        self.next_id
    }

    pub fn latest_timestamp(&self) -> Option<f64> {
        self.latest_timestamp
    }

    /// Most recent live episode.
    pub fn last_episode(&self) -> Option<&EpisodicNode> {
        self.nodes.values().rev().find_map(Node::as_episodic)
    }

    /// The `n` most recent live episodes, oldest first.
    pub fn recent_episodes(&self, n: usize) -> Vec<&EpisodicNode> {
        let mut v: Vec<_> = self
            .nodes
            .values()
            .rev()
            .filter_map(Node::as_episodic)
            .take(n)
            .collect();
        v.reverse();
        v
    }

    fn allocate_id(&mut self) -> NodeId {
        let id = NodeId(self.next_id);
        self.next_id += 1;
        id
    }

    fn check_size(&self, params: &HyperParams) {
        if self.nodes.len() > params.max_active_nodes {
            log::warn!(
                "active graph holds {} nodes, above the soft bound of {}",
                self.nodes.len(),
                params.max_active_nodes
            );
        }
    }

    /// Ingest one interaction turn: embed the concatenated texts, append an
    /// episode and link it from the previous episode with a temporal edge.
    pub fn append_turn(
        &mut self,
        user_text: &str,
        reply_text: &str,
        timestamp: f64,
        embedder: &dyn EmbeddingProvider,
        params: &HyperParams,
    ) -> Result<NodeId, GraphError> {
        let content = match (user_text.trim(), reply_text.trim()) {
            ("", "") => return Err(GraphError::EmptyContent),
            (u, "") => u.to_string(),
            ("", r) => r.to_string(),
            (u, r) => format!("{u}\n{r}"),
        };
        self.check_timestamp(timestamp)?;
        let embedding = embedder.embed(&content)?;
        self.push_episode(content, embedding, timestamp, params)
    }

    fn check_timestamp(&self, timestamp: f64) -> Result<(), GraphError> {
        if !timestamp.is_finite() || timestamp < 0.0 {
            return Err(GraphError::NonMonotoneTimestamp {
                given: timestamp,
                latest: self.latest_timestamp.unwrap_or(0.0),
            });
        }
        if let Some(latest) = self.latest_timestamp {
            if timestamp < latest {
                return Err(GraphError::NonMonotoneTimestamp {
                    given: timestamp,
                    latest,
                });
            }
        }
        Ok(())
    }

    /// Append an episode with a precomputed embedding.
    pub fn push_episode(
        &mut self,
        content: String,
        embedding: Embedding,
        timestamp: f64,
        params: &HyperParams,
    ) -> Result<NodeId, GraphError> {
        if content.trim().is_empty() {
            return Err(GraphError::EmptyContent);
        }
        self.check_timestamp(timestamp)?;
        let prev = self.last_episode().map(|e| (e.id, e.timestamp));
        let id = self.allocate_id();
        self.nodes.insert(
            id,
            Node::Episodic(EpisodicNode {
                id,
                content,
                embedding,
                timestamp,
                dormancy_streak: 0,
            }),
        );
        if let Some((prev_id, prev_ts)) = prev {
            let w = temporal_edge_weight(timestamp, prev_ts, params);
            self.insert_edge(Edge {
                src: prev_id,
                dst: id,
                kind: EdgeKind::Temporal,
                weight: w,
                created_at: self.consolidation_counter,
            });
        }
        self.latest_timestamp = Some(timestamp);
        self.turn_counter += 1;
        self.check_size(params);
        Ok(id)
    }

    /// Add a semantic node without duplicate detection.
    pub fn insert_semantic(
        &mut self,
        name: &str,
        category: Category,
        embedding: Embedding,
        attributes: Vec<String>,
        confidence: f64,
    ) -> Result<NodeId, GraphError> {
        let name = name.trim();
        if name.is_empty() {
            return Err(GraphError::EmptyName);
        }
        let id = self.allocate_id();
        self.nodes.insert(
            id,
            Node::Semantic(SemanticNode {
                id,
                name: name.to_string(),
                category,
                embedding,
                attributes,
                confidence,
                dormancy_streak: 0,
            }),
        );
        Ok(id)
    }

    /// Add a validated edge. Returns `false` if an edge with the same
    /// `(src, dst, kind)` already exists (the existing edge is kept).
    pub fn add_edge(
        &mut self,
        src: NodeId,
        dst: NodeId,
        kind: EdgeKind,
        weight: f64,
    ) -> Result<bool, GraphError> {
        if !(0.0..=1.0).contains(&weight) {
            return Err(GraphError::WeightOutOfRange(weight));
        }
        let bad = |reason| GraphError::InvalidEdge { src, dst, reason };
        if src == dst {
            return Err(bad("self-loop"));
        }
        let s = self.nodes.get(&src).ok_or(GraphError::UnknownNode(src))?;
        let d = self.nodes.get(&dst).ok_or(GraphError::UnknownNode(dst))?;
        let ok = match kind {
            EdgeKind::Temporal => s.kind() == NodeKind::Episodic && d.kind() == NodeKind::Episodic,
            EdgeKind::Abstraction => s.kind() != d.kind(),
            EdgeKind::Association => {
                s.kind() == NodeKind::Semantic && d.kind() == NodeKind::Semantic
            }
        };
        if !ok {
            return Err(bad("edge kind does not match endpoint kinds"));
        }
        let key = EdgeKey { src, dst, kind };
        if self.edges.contains_key(&key) {
            return Ok(false);
        }
        self.insert_edge(Edge {
            src,
            dst,
            kind,
            weight,
            created_at: self.consolidation_counter,
        });
        Ok(true)
    }

    /// Restore a fully specified edge (used by snapshot loading).
    pub(crate) fn insert_edge(&mut self, edge: Edge) {
        let key = edge.key();
        self.outgoing.entry(edge.src).or_default().insert(key);
        self.incoming.entry(edge.dst).or_default().insert(key);
        self.edges.insert(key, edge);
    }

    pub(crate) fn remove_edge(&mut self, key: &EdgeKey) -> Option<Edge> {
        let edge = self.edges.remove(key)?;
        if let Some(s) = self.outgoing.get_mut(&key.src) {
            s.remove(key);
            if s.is_empty() {
                self.outgoing.remove(&key.src);
            }
        }
        if let Some(s) = self.incoming.get_mut(&key.dst) {
            s.remove(key);
            if s.is_empty() {
                self.incoming.remove(&key.dst);
            }
        }
        Some(edge)
    }

    pub fn set_dormancy_streak(&mut self, id: NodeId, streak: u32) -> Result<(), GraphError> {
        let node = self.nodes.get_mut(&id).ok_or(GraphError::UnknownNode(id))?;
        *node.dormancy_streak_mut() = streak;
        Ok(())
    }

    /// Reassemble a graph from decoded parts. Adjacency is rebuilt from the edges.
    pub(crate) fn from_parts(
        nodes: Vec<Node>,
        edges: Vec<Edge>,
        archive: Archive,
        turn_counter: u64,
        consolidation_counter: u64,
        next_id: u64,
    ) -> Result<Self, GraphError> {
        let mut g = MemoryGraph {
            turn_counter,
            consolidation_counter,
            next_id,
            archive,
            ..Default::default()
        };
        for n in nodes {
            g.nodes.insert(n.id(), n);
        }
        for e in edges {
            for end in [e.src, e.dst] {
                if !g.nodes.contains_key(&end) {
                    return Err(GraphError::UnknownNode(end));
                }
            }
            g.insert_edge(e);
        }
        g.latest_timestamp = g
            .nodes
            .values()
            .chain(g.archive.nodes.values())
            .filter_map(Node::timestamp)
            .reduce(f64::max);
        Ok(g)
    }
}
