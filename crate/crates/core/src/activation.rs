//! Spreading activation over the memory graph.
//!
//! One cycle is propagation with fan-out dilution, then lateral inhibition by
//! the strongest nodes, then sigmoid firing. All maps are sparse and ordered by
//! node id so results are bit-reproducible.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use crate::embedding::{cosine_sim, Embedding};
use crate::error::GraphError;
use crate::graph::{temporal_edge_weight, Edge, EdgeKind, MemoryGraph, NodeId};
use crate::lexical::LexicalIndex;
use crate::params::HyperParams;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ActivationState {
    /// Firing rates; absent ids are 0.
    pub activation: BTreeMap<NodeId, f64>,
    /// Inhibited potentials of the last completed cycle.
    pub potential: BTreeMap<NodeId, f64>,
    pub iteration: usize,
    pub anchors: BTreeSet<NodeId>,
    /// Highest activation each node reached, seeding included.
    pub peak: BTreeMap<NodeId, f64>,
}

impl ActivationState {
    pub fn get(&self, id: NodeId) -> f64 {
        self.activation.get(&id).copied().unwrap_or(0.0)
    }

    fn record_peaks(&mut self) {
        for (&id, &a) in &self.activation {
            let p = self.peak.entry(id).or_insert(0.0);
            if a > *p {
                *p = a;
            }
        }
    }
}

/// Every live node ranked by cosine similarity to `query`, ties by id.
pub fn dense_ranking(
    graph: &MemoryGraph,
    query: &Embedding,
) -> Result<Vec<(NodeId, f64)>, GraphError> {
    let mut ranked = Vec::with_capacity(graph.len());
    for n in graph.nodes() {
        ranked.push((n.id(), cosine_sim(n.embedding(), query)?));
    }
    ranked.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .unwrap_or(Ordering::Equal)
            .then(a.0.cmp(&b.0))
    });
    Ok(ranked)
}

/// Initial state: energy `max(0, alpha * sim)` on the union of the top
/// `anchor_k` lexical and dense hits.
pub fn seed_anchors(
    graph: &MemoryGraph,
    query_text: &str,
    query_embedding: &Embedding,
    lexical: &LexicalIndex,
    params: &HyperParams,
) -> Result<ActivationState, GraphError> {
    if graph.is_empty() {
        return Err(GraphError::EmptyStore);
    }
    let dense = dense_ranking(graph, query_embedding)?;
    Ok(seed_from_ranking(
        graph, query_text, &dense, lexical, params,
    ))
}

/// [`seed_anchors`] with a precomputed [`dense_ranking`].
pub fn seed_from_ranking(
    graph: &MemoryGraph,
    query_text: &str,
    dense: &[(NodeId, f64)],
    lexical: &LexicalIndex,
    params: &HyperParams,
) -> ActivationState {
    let mut anchors: BTreeSet<NodeId> = dense
        .iter()
        .take(params.anchor_k)
        .map(|(id, _)| *id)
        .collect();
    anchors.extend(
        lexical
            .bm25_scores(query_text, params.anchor_k)
            .into_iter()
            .map(|(id, _)| id)
            .filter(|id| graph.contains(*id)),
    );
    let sims: BTreeMap<NodeId, f64> = dense.iter().copied().collect();
    let mut state = ActivationState {
        anchors,
        ..Default::default()
    };
    for &id in &state.anchors {
        let a = (params.alpha * sims.get(&id).copied().unwrap_or(0.0)).max(0.0);
        if a > 0.0 {
            state.activation.insert(id, a);
        }
    }
    state.record_peaks();
    state
}

/// Weight used during propagation; temporal edges decay with the timestamp gap.
pub fn propagation_weight(graph: &MemoryGraph, edge: &Edge, params: &HyperParams) -> f64 {
    match edge.kind {
        EdgeKind::Temporal => {
            let ts = |id| graph.node(id).and_then(|n| n.timestamp()).unwrap_or(0.0);
            temporal_edge_weight(ts(edge.dst), ts(edge.src), params)
        }
        EdgeKind::Abstraction | EdgeKind::Association => edge.weight,
    }
}

/// Potentials `u_i = (1 - delta) a_i + sum_j S w_ji a_j / fan(j)` over the
/// active set and its one-hop frontier. With literal firing every live node
/// gets an entry, since every node fires.
pub fn propagate_step(
    graph: &MemoryGraph,
    state: &ActivationState,
    params: &HyperParams,
) -> BTreeMap<NodeId, f64> {
    let mut u: BTreeMap<NodeId, f64> = BTreeMap::new();
    if !params.sparse_firing {
        u.extend(graph.node_ids().map(|id| (id, 0.0)));
    }
    for (&j, &a_j) in &state.activation {
        if a_j <= 0.0 || !graph.contains(j) {
            continue;
        }
        *u.entry(j).or_insert(0.0) += (1.0 - params.delta) * a_j;
        let fan = if params.fan_effect {
            graph.fan(j).max(1)
        } else {
            1
        } as f64;
        for e in graph.outgoing(j) {
            let w = propagation_weight(graph, e, params);
            *u.entry(e.dst).or_insert(0.0) += params.spreading * w * a_j / fan;
        }
    }
    u
}

/// `u_i - beta * sum_{k in top-M, u_k > u_i} (u_k - u_i)`, floored at 0.
/// Only positive potentials take part.
pub fn lateral_inhibition(
    potentials: &BTreeMap<NodeId, f64>,
    params: &HyperParams,
) -> BTreeMap<NodeId, f64> {
    let mut ranked: Vec<(NodeId, f64)> = potentials
        .iter()
        .filter(|(_, &u)| u > 0.0)
        .map(|(&id, &u)| (id, u))
        .collect();
    ranked.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .unwrap_or(Ordering::Equal)
            .then(a.0.cmp(&b.0))
    });
    let top: Vec<f64> = ranked
        .iter()
        .take(params.inhibit_m)
        .map(|(_, u)| *u)
        .collect();
    potentials
        .iter()
        .map(|(&id, &u)| {
            if u <= 0.0 {
                return (id, 0.0);
            }
            let pressure: f64 = top.iter().filter(|&&k| k > u).map(|&k| k - u).sum();
            (id, (u - params.beta * pressure).max(0.0))
        })
        .collect()
}

pub fn sigmoid(x: f64, params: &HyperParams) -> f64 {
    1.0 / (1.0 + (-params.gamma * (x - params.theta)).exp())
}

/// Firing rates. Under the sparse rule, potentials at or below
/// `epsilon_dormant` fire exactly 0 and are dropped from the map.
pub fn fire(inhibited: &BTreeMap<NodeId, f64>, params: &HyperParams) -> BTreeMap<NodeId, f64> {
    inhibited
        .iter()
        .filter(|(_, &u)| !params.sparse_firing || u > params.epsilon_dormant)
        .map(|(&id, &u)| (id, sigmoid(u, params)))
        .collect()
}

/// One full cycle: propagate, inhibit, fire.
pub fn step(graph: &MemoryGraph, state: &mut ActivationState, params: &HyperParams) {
    let u = propagate_step(graph, state, params);
    let inhibited = lateral_inhibition(&u, params);
    state.activation = fire(&inhibited, params);
    state.potential = inhibited;
    state.iteration += 1;
    state.record_peaks();
}

/// Seed anchors and run `params.steps` cycles.
pub fn run_activation(
    graph: &MemoryGraph,
    query_text: &str,
    query_embedding: &Embedding,
    lexical: &LexicalIndex,
    params: &HyperParams,
) -> Result<ActivationState, GraphError> {
    let mut state = seed_anchors(graph, query_text, query_embedding, lexical, params)?;
    for _ in 0..params.steps {
        step(graph, &mut state, params);
    }
    Ok(state)
}
