//! Query-independent PageRank prior, refreshed at consolidation.

use std::collections::BTreeMap;

use crate::graph::{MemoryGraph, NodeId};
use crate::params::HyperParams;

#[derive(Debug, Clone, PartialEq)]
pub struct StructuralPrior {
    pub scores: BTreeMap<NodeId, f64>,
    /// Scores divided by their maximum.
    pub normalized: BTreeMap<NodeId, f64>,
    /// Consolidation index at computation time.
    pub computed_at: u64,
    pub damping: f64,
    pub iterations: usize,
    pub tolerance: f64,
    /// Power iterations actually run.
    pub iterations_run: usize,
}

impl Default for StructuralPrior {
    fn default() -> Self {
        let p = HyperParams::default();
        Self::empty(&p, 0)
    }
}

impl StructuralPrior {
    pub fn empty(params: &HyperParams, computed_at: u64) -> Self {
        Self {
            scores: BTreeMap::new(),
            normalized: BTreeMap::new(),
            computed_at,
            damping: params.pagerank_damping,
            iterations: params.pagerank_iterations,
            tolerance: params.pagerank_tolerance,
            iterations_run: 0,
        }
    }

    /// Normalized prior of `id`; nodes unknown at computation time get 0.
    pub fn lookup(&self, id: NodeId) -> f64 {
        self.normalized.get(&id).copied().unwrap_or(0.0)
    }

    /// Rebuild the normalized map from raw scores.
    pub fn with_scores(mut self, scores: BTreeMap<NodeId, f64>) -> Self {
        let max = scores.values().copied().fold(0.0, f64::max);
        self.normalized = scores
            .iter()
            .map(|(&id, &s)| (id, if max > 0.0 { s / max } else { 0.0 }))
            .collect();
        self.scores = scores;
        self
    }
}

/// Unweighted PageRank over all live nodes and edges. Dangling mass is spread
/// uniformly. Stops when the L1 change drops below the tolerance or after the
/// iteration cap.
pub fn compute_pagerank(graph: &MemoryGraph, params: &HyperParams) -> StructuralPrior {
    let mut prior = StructuralPrior::empty(params, graph.consolidation_counter());
    let ids: Vec<NodeId> = graph.node_ids().collect();
    let n = ids.len();
    if n == 0 {
        return prior;
    }
    let pos: BTreeMap<NodeId, usize> = ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();
    let out: Vec<Vec<usize>> = ids
        .iter()
        .map(|&id| graph.outgoing(id).map(|e| pos[&e.dst]).collect())
        .collect();
    let d = params.pagerank_damping;
    let nf = n as f64;
    let mut rank = vec![1.0 / nf; n];
    let mut next = vec![0.0; n];
    for it in 0..params.pagerank_iterations {
        let dangling: f64 = out
            .iter()
            .zip(&rank)
            .filter(|(o, _)| o.is_empty())
            .map(|(_, r)| r)
            .sum();
        let base = (1.0 - d) / nf + d * dangling / nf;
        next.iter_mut().for_each(|x| *x = base);
        for (j, targets) in out.iter().enumerate() {
            if targets.is_empty() {
                continue;
            }
            let share = d * rank[j] / targets.len() as f64;
            for &i in targets {
                next[i] += share;
            }
        }
        let delta: f64 = next.iter().zip(&rank).map(|(a, b)| (a - b).abs()).sum();
        std::mem::swap(&mut rank, &mut next);
        prior.iterations_run = it + 1;
        if delta < params.pagerank_tolerance {
            break;
        }
    }
    let scores = ids.into_iter().zip(rank).collect();
    prior.with_scores(scores)
}
