//! Edge pruning, dormancy bookkeeping and archival.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use super::{EdgeKey, MemoryGraph, NodeId};
use crate::error::GraphError;
use crate::params::HyperParams;

impl MemoryGraph {
    /// Keep only the `prune_k` strongest incoming edges of every node.
    /// Ties: newer `created_at` wins, then smaller source id. Returns the
    /// number of edges removed.
    pub fn prune_edges(&mut self, params: &HyperParams) -> usize {
        let mut doomed: Vec<EdgeKey> = Vec::new();
        for keys in self.incoming.values() {
            if keys.len() <= params.prune_k {
                continue;
            }
            let mut ranked: Vec<_> = keys.iter().map(|k| &self.edges[k]).collect();
            ranked.sort_by(|a, b| {
                b.weight
                    .partial_cmp(&a.weight)
                    .unwrap_or(Ordering::Equal)
                    .then(b.created_at.cmp(&a.created_at))
                    .then(a.src.cmp(&b.src))
                    .then(a.kind.cmp(&b.kind))
            });
            doomed.extend(ranked[params.prune_k..].iter().map(|e| e.key()));
        }
        for k in &doomed {
            self.remove_edge(k);
        }
        doomed.len()
    }

    /// Close one consolidation window: nodes whose peak activation reached
    /// `epsilon_dormant` reset their streak, all others extend it.
    pub fn apply_window_peaks(&mut self, peaks: &BTreeMap<NodeId, f64>, params: &HyperParams) {
        for (id, node) in self.nodes.iter_mut() {
            let s = node.dormancy_streak_mut();
            if peaks.get(id).is_some_and(|&p| p >= params.epsilon_dormant) {
                *s = 0;
            } else {
                *s = s.saturating_add(1);
            }
        }
    }

    /// Archive every node whose dormancy streak reached `dormancy_w`.
    pub fn collect_dormant(&mut self, params: &HyperParams) -> Vec<NodeId> {
        let ids: Vec<NodeId> = self
            .nodes
            .values()
            .filter(|n| n.dormancy_streak() >= params.dormancy_w)
            .map(|n| n.id())
            .collect();
        self.archive_nodes(&ids)
            .expect("dormant ids are live nodes");
        ids
    }

    /// Move nodes and all their incident edges into the archive.
    pub fn archive_nodes(&mut self, ids: &[NodeId]) -> Result<(), GraphError> {
        if let Some(&missing) = ids.iter().find(|id| !self.nodes.contains_key(id)) {
            return Err(GraphError::UnknownNode(missing));
        }
        for id in ids {
            let mut incident: Vec<EdgeKey> = Vec::new();
            incident.extend(self.outgoing.get(id).into_iter().flatten());
            incident.extend(self.incoming.get(id).into_iter().flatten());
            for k in incident {
                if let Some(e) = self.remove_edge(&k) {
                    self.archive.edges.insert(k, e);
                }
            }
            let node = self.nodes.remove(id).expect("checked above");
            self.archive.nodes.insert(*id, node);
        }
        Ok(())
    }

    /// Bring archived nodes back, with every archived edge whose endpoints
    /// are all live again.
    pub fn restore_nodes(&mut self, ids: &[NodeId]) -> Result<(), GraphError> {
        if let Some(&missing) = ids.iter().find(|id| !self.archive.nodes.contains_key(id)) {
            return Err(GraphError::NotArchived(missing));
        }
        for id in ids {
            let node = self.archive.nodes.remove(id).expect("checked above");
            self.nodes.insert(*id, node);
        }
        let revivable: Vec<EdgeKey> = self
            .archive
            .edges
            .keys()
            .filter(|k| self.nodes.contains_key(&k.src) && self.nodes.contains_key(&k.dst))
            .copied()
            .collect();
        for k in revivable {
            let e = self.archive.edges.remove(&k).expect("key listed above");
            self.insert_edge(e);
        }
        Ok(())
    }
}
