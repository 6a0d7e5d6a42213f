//! Consolidation: extraction over the recent window, dedup, and edge formation.

use std::collections::{BTreeMap, BTreeSet};

use super::{Edge, EdgeKey, EdgeKind, MemoryGraph, Node, NodeId, SemanticNode};
use crate::embedding::{cosine_sim, dot, Embedding, EmbeddingProvider};
use crate::error::GraphError;
use crate::extract::{ConceptExtractor, ExtractedEdgeHint, ExtractedItem};
use crate::params::HyperParams;

/// What happened to one extracted item.
#[derive(Debug, Clone, PartialEq)]
pub enum ItemOutcome {
    Created {
        name: String,
        id: NodeId,
    },
    /// Merged into an existing node whose similarity exceeded the dedup threshold.
    Merged {
        name: String,
        id: NodeId,
        similarity: f64,
    },
}

impl ItemOutcome {
    pub fn id(&self) -> NodeId {
        match self {
            ItemOutcome::Created { id, .. } | ItemOutcome::Merged { id, .. } => *id,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConsolidationReport {
    /// Consolidation index assigned to this run.
    pub index: u64,
    pub window: Vec<NodeId>,
    /// One entry per extracted item, in extraction order.
    pub outcomes: Vec<ItemOutcome>,
    pub edges_created: Vec<EdgeKey>,
    pub unresolved_hints: Vec<ExtractedEdgeHint>,
}

impl ConsolidationReport {
    pub fn created(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.outcomes.iter().filter_map(|o| match o {
            ItemOutcome::Created { id, .. } => Some(*id),
            _ => None,
        })
    }

    pub fn merged(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.outcomes.iter().filter_map(|o| match o {
            ItemOutcome::Merged { id, .. } => Some(*id),
            _ => None,
        })
    }

    /// Nodes whose text or embedding changed.
    pub fn touched(&self) -> BTreeSet<NodeId> {
        self.outcomes.iter().map(ItemOutcome::id).collect()
    }
}

fn attribute_lines(item: &ExtractedItem) -> Vec<String> {
    let mut out = Vec::new();
    if let Some(a) = &item.attribute {
        out.push(a.clone());
    }
    if let Some(t) = &item.time_hint {
        out.push(format!("time: {t}"));
    }
    out
}

impl MemoryGraph {
    /// Best live semantic node with similarity strictly above `threshold`.
    fn dedup_target(&self, emb: &Embedding, threshold: f64) -> Option<(NodeId, f64)> {
        let mut best: Option<(NodeId, f64)> = None;
        for s in self.semantic_nodes() {
            let sim = dot(s.embedding.as_slice(), emb.as_slice()).clamp(-1.0, 1.0);
            if sim > threshold && best.is_none_or(|(_, b)| sim > b) {
                best = Some((s.id, sim));
            }
        }
        best
    }

    fn semantic_by_name(&self, name: &str) -> Option<NodeId> {
        self.semantic_nodes()
            .find(|s| s.name.eq_ignore_ascii_case(name))
            .map(|s| s.id)
    }

    fn push_new_edge(
        &mut self,
        src: NodeId,
        dst: NodeId,
        kind: EdgeKind,
        weight: f64,
        created_at: u64,
        report: &mut ConsolidationReport,
    ) {
        let key = EdgeKey { src, dst, kind };
        if src == dst || self.edges.contains_key(&key) {
            return;
        }
        self.insert_edge(Edge {
            src,
            dst,
            kind,
            weight,
            created_at,
        });
        report.edges_created.push(key);
    }

    /// Run one consolidation over the last `consolidation_n` live episodes.
    ///
    /// All fallible work (extraction, embedding) finishes before the graph is
    /// touched, so an error leaves the graph exactly as it was.
    pub fn consolidate(
        &mut self,
        extractor: &dyn ConceptExtractor,
        embedder: &dyn EmbeddingProvider,
        params: &HyperParams,
    ) -> Result<ConsolidationReport, GraphError> {
        let window: Vec<NodeId> = self
            .recent_episodes(params.consolidation_n)
            .iter()
            .map(|e| e.id)
            .collect();
        let extraction = {
            let turns: Vec<&str> = self
                .recent_episodes(params.consolidation_n)
                .into_iter()
                .map(|e| e.content.as_str())
                .collect();
            extractor.extract(&turns)?
        };
        let mut embedded = Vec::with_capacity(extraction.items.len());
        for item in &extraction.items {
            if item.name.trim().is_empty() {
                return Err(GraphError::EmptyName);
            }
            embedded.push(embedder.embed(&item.name)?);
        }

        // Mutation phase: nothing below can fail.
        let index = self.consolidation_counter + 1;
        let mut report = ConsolidationReport {
            index,
            window: window.clone(),
            ..Default::default()
        };
        let mut batch_names: BTreeMap<String, NodeId> = BTreeMap::new();
        for (item, emb) in extraction.items.iter().zip(embedded) {
            let outcome = match self.dedup_target(&emb, params.tau_dup) {
                Some((id, similarity)) => {
                    let Some(Node::Semantic(node)) = self.nodes.get_mut(&id) else {
                        unreachable!("dedup target is a live semantic node")
                    };
                    // Blending two unit vectors with positive cosine never cancels.
                    if let Ok(e) = node.embedding.blend(&emb, params.ema_retention) {
                        node.embedding = e;
                    }
                    for a in attribute_lines(item) {
                        if !node.attributes.contains(&a) {
                            node.attributes.push(a);
                        }
                    }
                    node.confidence = node.confidence.max(item.confidence);
                    ItemOutcome::Merged {
                        name: item.name.clone(),
                        id,
                        similarity,
                    }
                }
                None => {
                    let id = self.allocate_id();
                    self.nodes.insert(
                        id,
                        Node::Semantic(SemanticNode {
                            id,
                            name: item.name.trim().to_string(),
                            category: item.category,
                            embedding: emb,
                            attributes: attribute_lines(item),
                            confidence: item.confidence,
                            dormancy_streak: 0,
                        }),
                    );
                    ItemOutcome::Created {
                        name: item.name.clone(),
                        id,
                    }
                }
            };
            let sid = outcome.id();
            batch_names.entry(item.name.to_lowercase()).or_insert(sid);
            for &ep in &window {
                let w = params.abstraction_weight;
                self.push_new_edge(ep, sid, EdgeKind::Abstraction, w, index, &mut report);
                self.push_new_edge(sid, ep, EdgeKind::Abstraction, w, index, &mut report);
            }
            report.outcomes.push(outcome);
        }

        for hint in extraction.edge_hints {
            let resolve = |name: &str| {
                batch_names
                    .get(&name.to_lowercase())
                    .copied()
                    .or_else(|| self.semantic_by_name(name))
            };
            match (resolve(&hint.src_name), resolve(&hint.tgt_name)) {
                (Some(s), Some(t)) if s != t => {
                    self.push_new_edge(s, t, EdgeKind::Association, hint.weight, index, &mut report)
                }
                _ => report.unresolved_hints.push(hint),
            }
        }

        self.link_similar(&report.touched(), index, params, &mut report);
        self.consolidation_counter = index;
        self.check_size(params);
        Ok(report)
    }

    /// Association edges `i -> j` for semantic pairs with similarity above
    /// `tau_dup` where `j` is among the `association_top` most similar
    /// neighbours of `i`.
    ///
    /// Only pairs with at least one touched endpoint can newly qualify: for
    /// untouched pairs the similarity is unchanged and new nodes can only push
    /// a neighbour out of the top set, never in. Skipping them also keeps
    /// pruned edges from being resurrected.
    fn link_similar(
        &mut self,
        touched: &BTreeSet<NodeId>,
        index: u64,
        params: &HyperParams,
        report: &mut ConsolidationReport,
    ) {
        if touched.is_empty() {
            return;
        }
        let sem: Vec<(NodeId, &Embedding)> = self
            .semantic_nodes()
            .map(|s| (s.id, &s.embedding))
            .collect();
        let sim = |a: &Embedding, b: &Embedding| cosine_sim(a, b).unwrap_or(0.0);
        // Rank of `j` among the neighbours of `i`: number of others strictly
        // more similar, or equally similar with a smaller id.
        let in_top = |i: usize, j: usize, s_ij: f64| {
            let mut ahead = 0usize;
            for (k, (kid, ke)) in sem.iter().enumerate() {
                if k == i || k == j {
                    continue;
                }
                let s = sim(sem[i].1, ke);
                if s > s_ij || (s == s_ij && *kid < sem[j].0) {
                    ahead += 1;
                    if ahead >= params.association_top {
                        return false;
                    }
                }
            }
            true
        };
        let mut new_edges = Vec::new();
        for i in 0..sem.len() {
            for j in 0..sem.len() {
                if i == j || !(touched.contains(&sem[i].0) || touched.contains(&sem[j].0)) {
                    continue;
                }
                let s_ij = sim(sem[i].1, sem[j].1);
                if s_ij > params.tau_dup && in_top(i, j, s_ij) {
                    new_edges.push((sem[i].0, sem[j].0, s_ij.clamp(0.0, 1.0)));
                }
            }
        }
        for (src, dst, w) in new_edges {
            self.push_new_edge(src, dst, EdgeKind::Association, w, index, report);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::HashEmbedder;
    use crate::error::ExtractError;
    use crate::extract::{Category, Extraction, RuleExtractor};

    struct Fixed(Extraction);
    impl ConceptExtractor for Fixed {
        fn extract(&self, _: &[&str]) -> Result<Extraction, ExtractError> {
            Ok(self.0.clone())
        }
    }

    struct Failing;
    impl ConceptExtractor for Failing {
        fn extract(&self, _: &[&str]) -> Result<Extraction, ExtractError> {
            Err(ExtractError::Backend("boom".into()))
        }
    }

    fn item(name: &str) -> ExtractedItem {
        ExtractedItem {
            name: name.into(),
            category: Category::Preference,
            attribute: None,
            confidence: 0.9,
            time_hint: None,
        }
    }

    fn five_turns() -> (MemoryGraph, HashEmbedder, HyperParams) {
        let e = HashEmbedder::new(64, 3);
        let p = HyperParams::default();
        let mut g = MemoryGraph::new();
        for i in 0..5 {
            g.append_turn(&format!("turn number {i}"), "ok", i as f64, &e, &p)
                .unwrap();
        }
        (g, e, p)
    }

    #[test]
    fn repeated_concept_merges() {
        let (mut g, e, p) = five_turns();
        let ex = Fixed(Extraction {
            items: vec![item("Camping"), item("Camping")],
            edge_hints: vec![],
        });
        let r = g.consolidate(&ex, &e, &p).unwrap();
        assert_eq!(r.created().count(), 1);
        assert_eq!(r.merged().count(), 1);
        assert_eq!(g.semantic_nodes().count(), 1);
        assert_eq!(g.consolidation_counter(), 1);
    }

    #[test]
    fn one_concept_gives_ten_abstraction_edges() {
        let (mut g, e, p) = five_turns();
        let before = g.edge_count();
        let ex = Fixed(Extraction {
            items: vec![item("Camping")],
            edge_hints: vec![],
        });
        let r = g.consolidate(&ex, &e, &p).unwrap();
        assert_eq!(r.edges_created.len(), 10);
        assert_eq!(g.edge_count() - before, 10);
        assert!(g
            .edges()
            .filter(|e| e.kind == EdgeKind::Abstraction)
            .all(|e| e.weight == 0.8 && e.created_at == 1));
    }

    #[test]
    fn failing_extractor_leaves_graph_untouched() {
        let (mut g, e, p) = five_turns();
        let before = g.clone();
        assert!(g.consolidate(&Failing, &e, &p).is_err());
        assert_eq!(g, before);
    }

    #[test]
    fn hints_resolve_or_are_reported() {
        let (mut g, e, p) = five_turns();
        let ex = Fixed(Extraction {
            items: vec![item("John"), item("Camping")],
            edge_hints: vec![
                ExtractedEdgeHint {
                    src_name: "john".into(),
                    relation: "HAS_INTEREST".into(),
                    tgt_name: "Camping".into(),
                    weight: 1.0,
                },
                ExtractedEdgeHint {
                    src_name: "Nobody".into(),
                    relation: "KNOWS".into(),
                    tgt_name: "Camping".into(),
                    weight: 0.5,
                },
            ],
        });
        let r = g.consolidate(&ex, &e, &p).unwrap();
        assert_eq!(r.unresolved_hints.len(), 1);
        let assoc: Vec<_> = g
            .edges()
            .filter(|e| e.kind == EdgeKind::Association)
            .collect();
        assert_eq!(assoc.len(), 1);
        assert_eq!(assoc[0].weight, 1.0);
    }

    #[test]
    fn rule_extractor_end_to_end() {
        let e = HashEmbedder::new(128, 3);
        let p = HyperParams::default();
        let mut g = MemoryGraph::new();
        let turns = [
            "We went on a ski trip with Mark",
            "I love camping",
            "Mark said hi",
            "nothing much",
            "ok",
        ];
        for (i, t) in turns.iter().enumerate() {
            g.append_turn(t, "", i as f64, &e, &p).unwrap();
        }
        let r = g.consolidate(&RuleExtractor::default(), &e, &p).unwrap();
        let names: Vec<_> = g.semantic_nodes().map(|s| s.name.as_str()).collect();
        assert_eq!(names, ["ski trip", "Mark", "camping"]);
        assert_eq!(r.outcomes.len(), 3);
        assert!(r.unresolved_hints.is_empty());
    }
}
