mod common;

use std::sync::atomic::{AtomicUsize, Ordering};

use mnemo_core::error::{EmbedError, ExtractError};
use mnemo_core::extract::Extraction;
use mnemo_core::graph::ItemOutcome;
use mnemo_core::persistence::canonical_graph_bytes;
use mnemo_core::{
    Category, ConceptExtractor, EdgeKind, Embedding, EmbeddingProvider, ExtractedItem,
    HashEmbedder, HyperParams, MemoryGraph, NodeId, NodeKind,
};
use proptest::prelude::*;

use common::*;

/// One item per turn, named by the turn text.
struct EchoExtractor;

impl ConceptExtractor for EchoExtractor {
    fn extract(&self, turns: &[&str]) -> Result<Extraction, ExtractError> {
        Ok(Extraction {
            items: turns
                .iter()
                .map(|t| ExtractedItem {
                    name: t.to_string(),
                    category: Category::Other,
                    attribute: Some(format!("said {t}")),
                    confidence: 0.5,
                    time_hint: None,
                })
                .collect(),
            edge_hints: vec![],
        })
    }
}

struct FailingExtractor;

impl ConceptExtractor for FailingExtractor {
    fn extract(&self, _: &[&str]) -> Result<Extraction, ExtractError> {
        Err(ExtractError::Backend("model unavailable".into()))
    }
}

/// Fails on the `fail_at`-th call; used to break a batch half way through
/// embedding its items.
struct FlakyEmbedder {
    inner: HashEmbedder,
    calls: AtomicUsize,
    fail_at: usize,
}

impl EmbeddingProvider for FlakyEmbedder {
    fn dimension(&self) -> usize {
        self.inner.dimension()
    }
    fn embed(&self, text: &str) -> Result<Embedding, EmbedError> {
        if self.calls.fetch_add(1, Ordering::SeqCst) == self.fail_at {
            return Err(EmbedError::Transport("connection reset".into()));
        }
        self.inner.embed(text)
    }
}

fn name_strategy() -> impl Strategy<Value = String> {
    prop::collection::vec(prop::sample::select(vec!["ski", "lake", "mark"]), 1..6)
        .prop_map(|w| w.join(" "))
}

fn dot(a: &Embedding, b: &Embedding) -> f64 {
    a.as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| x * y)
        .sum()
}

/// `paired`: abstraction edges come in both directions (true for graphs
/// built by consolidation, not for hand-wired ones).
fn check_edge_invariants(g: &MemoryGraph, paired: bool) -> Result<(), TestCaseError> {
    for e in g.edges() {
        prop_assert!((0.0..=1.0).contains(&e.weight));
        prop_assert_ne!(e.src, e.dst);
        let (s, d) = (g.node(e.src).unwrap().kind(), g.node(e.dst).unwrap().kind());
        let ok = match e.kind {
            EdgeKind::Temporal => s == NodeKind::Episodic && d == NodeKind::Episodic,
            EdgeKind::Abstraction => s != d,
            EdgeKind::Association => s == NodeKind::Semantic && d == NodeKind::Semantic,
        };
        prop_assert!(ok, "{:?} edge between {:?} and {:?}", e.kind, s, d);
        if paired && e.kind == EdgeKind::Abstraction {
            let back = mnemo_core::graph::EdgeKey {
                src: e.dst,
                dst: e.src,
                kind: e.kind,
            };
            prop_assert!(g.edge(&back).is_some());
        }
    }
    for id in g.node_ids() {
        prop_assert_eq!(g.fan(id), g.edges().filter(|e| e.src == id).count());
    }
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn temporal_edges_form_one_path(gaps in prop::collection::vec(0.0f64..10.0, 1..40)) {
        let p = HyperParams::default();
        let e = HashEmbedder::new(16, 3);
        let mut g = MemoryGraph::new();
        let mut ts = 0.0;
        for (i, gap) in gaps.iter().enumerate() {
            ts += gap;
            g.append_turn(&format!("turn {i}"), "ok", ts, &e, &p).unwrap();
        }
        let temporal: Vec<_> = g.edges().filter(|e| e.kind == EdgeKind::Temporal).collect();
        prop_assert_eq!(temporal.len(), gaps.len() - 1);
        // Walk from the unique episode without an incoming temporal edge.
        let mut at = g.episodes().find(|ep| g.incoming(ep.id).all(|e| e.kind != EdgeKind::Temporal)).unwrap().id;
        let mut seen = vec![at];
        while let Some(next) = g.outgoing(at).find(|e| e.kind == EdgeKind::Temporal) {
            let (a, b) = (g.node(at).unwrap().timestamp().unwrap(), g.node(next.dst).unwrap().timestamp().unwrap());
            prop_assert!(a <= b);
            prop_assert!((next.weight - (-p.rho * (b - a)).exp()).abs() < 1e-12);
            at = next.dst;
            seen.push(at);
        }
        prop_assert_eq!(seen.len(), gaps.len());
    }

    #[test]
    fn dedup_matches_sequential_model(names in prop::collection::vec(name_strategy(), 5..120)) {
        let p = HyperParams::default();
        let emb = HashEmbedder::new(32, 9);
        let mut g = MemoryGraph::new();
        // Reference: (id, current embedding) per concept, replayed item by item.
        let mut model: Vec<(NodeId, Embedding)> = Vec::new();
        for (i, name) in names.iter().enumerate() {
            g.append_turn(name, "", i as f64, &emb, &p).unwrap();
            if (i + 1) % p.consolidation_n != 0 {
                continue;
            }
            let report = g.consolidate(&EchoExtractor, &emb, &p).unwrap();
            prop_assert_eq!(report.outcomes.len(), p.consolidation_n);
            for outcome in &report.outcomes {
                let name = match outcome { ItemOutcome::Created { name, .. } | ItemOutcome::Merged { name, .. } => name };
                let v = emb.embed(name).unwrap();
                let best = model
                    .iter()
                    .enumerate()
                    .map(|(k, (_, e))| (k, dot(e, &v)))
                    .filter(|(_, s)| *s > p.tau_dup)
                    .fold(None, |b: Option<(usize, f64)>, (k, s)| if b.is_none_or(|(_, bs)| s > bs) { Some((k, s)) } else { b });
                match (best, outcome) {
                    (Some((k, _)), ItemOutcome::Merged { id, .. }) => {
                        prop_assert_eq!(model[k].0, *id);
                        let mixed: Vec<f64> = model[k].1.as_slice().iter().zip(v.as_slice())
                            .map(|(a, b)| p.ema_retention * a + (1.0 - p.ema_retention) * b).collect();
                        model[k].1 = Embedding::normalized(mixed).unwrap();
                    }
                    (None, ItemOutcome::Created { id, .. }) => {
                        // Creation-time soundness against every live concept.
                        prop_assert!(model.iter().all(|(_, e)| dot(e, &v) <= p.tau_dup));
                        model.push((*id, v));
                    }
                    (b, o) => prop_assert!(false, "model {:?} but graph {:?}", b, o),
                }
            }
        }
        prop_assert_eq!(g.semantic_nodes().count(), model.len());
        for (id, e) in &model {
            let live = g.node(*id).unwrap().embedding();
            prop_assert!(live.as_slice().iter().zip(e.as_slice()).all(|(a, b)| (a - b).abs() < 1e-12));
        }
        check_edge_invariants(&g, true)?;
    }

    #[test]
    fn failed_consolidation_leaves_no_trace(turns in 1usize..12, fail_at in 0usize..5) {
        let p = HyperParams::default();
        let inner = HashEmbedder::new(32, 9);
        let mut g = MemoryGraph::new();
        for i in 0..turns {
            g.append_turn(&format!("Mark and Anna went to Lake Tahoe {i}"), "", i as f64, &inner, &p).unwrap();
        }
        let before = canonical_graph_bytes(&g);
        prop_assert!(g.consolidate(&FailingExtractor, &inner, &p).is_err());
        prop_assert_eq!(&canonical_graph_bytes(&g), &before);
        let flaky = FlakyEmbedder { inner, calls: AtomicUsize::new(0), fail_at: fail_at.min(turns.min(p.consolidation_n) - 1) };
        prop_assert!(g.consolidate(&EchoExtractor, &flaky, &p).is_err());
        prop_assert_eq!(&canonical_graph_bytes(&g), &before);
    }

    #[test]
    fn prune_bounds_in_degree(seed in any::<u64>(), n in 2usize..60, k in 1usize..=15) {
        let p = HyperParams { prune_k: k, ..HyperParams::default() };
        let mut g = small_graph(seed, n, 8, 12.0, &p);
        let before = g.edge_count();
        let removed = g.prune_edges(&p);
        prop_assert_eq!(before - removed, g.edge_count());
        prop_assert!(g.node_ids().all(|id| g.in_degree(id) <= k));
        prop_assert_eq!(g.prune_edges(&p), 0);
    }

    #[test]
    fn archive_restore_is_lossless(seed in any::<u64>(), n in 1usize..60, picks in prop::collection::vec(any::<prop::sample::Index>(), 0..20)) {
        let p = HyperParams::default();
        let mut g = small_graph(seed, n, 8, 3.0, &p);
        let before = canonical_graph_bytes(&g);
        let ids: Vec<NodeId> = g.node_ids().collect();
        let mut chosen: Vec<NodeId> = picks.iter().map(|i| *i.get(&ids)).collect();
        chosen.sort();
        chosen.dedup();
        g.archive_nodes(&chosen).unwrap();
        prop_assert!(chosen.iter().all(|id| !g.contains(*id) && g.archive().nodes.contains_key(id)));
        prop_assert!(g.edges().all(|e| g.contains(e.src) && g.contains(e.dst)));
        g.restore_nodes(&chosen).unwrap();
        prop_assert_eq!(canonical_graph_bytes(&g), before);
    }

    #[test]
    fn random_graphs_respect_edge_rules(seed in any::<u64>(), n in 1usize..80) {
        let g = small_graph(seed, n, 8, 5.0, &HyperParams::default());
        check_edge_invariants(&g, false)?;
    }
}
