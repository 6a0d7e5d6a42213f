//! The engine aggregate: graph, lexical index, prior and providers kept in step.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;

use crate::embedding::{EmbedderConfig, EmbedderMode, EmbeddingProvider};
use crate::error::{GraphError, Result};
use crate::extract::{ConceptExtractor, RuleExtractor};
use crate::graph::{ConsolidationReport, EdgeKind, MemoryGraph, NodeId, NodeKind};
use crate::lexical::LexicalIndex;
use crate::params::{HyperParams, TimestampUnit};
use crate::persistence::{load_snapshot, save_snapshot, Snapshot};
use crate::prior::{compute_pagerank, StructuralPrior};
use crate::retrieval::{retrieve_with, RetrievalResult, RetrieveOptions};

#[derive(Debug, Clone, PartialEq)]
pub struct IngestOutcome {
    pub id: NodeId,
    /// Present when this turn completed a consolidation window.
    pub consolidation: Option<ConsolidationReport>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct CompactReport {
    pub pruned_edges: usize,
    pub archived: Vec<NodeId>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct EngineStats {
    pub episodic_nodes: usize,
    pub semantic_nodes: usize,
    pub temporal_edges: usize,
    pub abstraction_edges: usize,
    pub association_edges: usize,
    pub archived_nodes: usize,
    pub archived_edges: usize,
    pub turns: u64,
    pub consolidations: u64,
    /// in-degree -> node count
    pub in_degree_histogram: BTreeMap<usize, usize>,
    /// out-degree -> node count
    pub out_degree_histogram: BTreeMap<usize, usize>,
}

/// Single-writer owner of the memory state.
///
/// Queries through [`Engine::query`] record per-node peak activations; the
/// next consolidation closes the window and updates dormancy streaks. Windows
/// without any query leave streaks unchanged.
pub struct Engine {
    params: HyperParams,
    graph: MemoryGraph,
    lexical: LexicalIndex,
    prior: StructuralPrior,
    embedder: Arc<dyn EmbeddingProvider>,
    extractor: Arc<dyn ConceptExtractor>,
    options: RetrieveOptions,
    window_peaks: BTreeMap<NodeId, f64>,
    queries_in_window: usize,
}

impl std::fmt::Debug for Engine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Engine")
            .field("nodes", &self.graph.len())
            .field("edges", &self.graph.edge_count())
            .finish_non_exhaustive()
    }
}

/// Offline providers: the hashing embedder from `params` and the rule extractor.
pub fn default_providers(
    params: &HyperParams,
) -> Result<(Arc<dyn EmbeddingProvider>, Arc<dyn ConceptExtractor>)> {
    let cfg = EmbedderConfig {
        dimension: params.embed_dim,
        mode: EmbedderMode::DeterministicHash,
        seed: params.embed_seed,
        ..EmbedderConfig::default()
    };
    Ok((cfg.build()?, Arc::new(RuleExtractor::default())))
}

impl Engine {
    /// Engine with the offline providers.
    pub fn new(params: HyperParams) -> Result<Self> {
        let (e, x) = default_providers(&params)?;
        Self::with_components(params, e, x)
    }

    pub fn with_components(
        params: HyperParams,
        embedder: Arc<dyn EmbeddingProvider>,
        extractor: Arc<dyn ConceptExtractor>,
    ) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            lexical: LexicalIndex::from_params(&params),
            prior: StructuralPrior::empty(&params, 0),
            graph: MemoryGraph::new(),
            params,
            embedder,
            extractor,
            options: RetrieveOptions::default(),
            window_peaks: BTreeMap::new(),
            queries_in_window: 0,
        })
    }

    pub fn from_snapshot(
        snap: Snapshot,
        embedder: Arc<dyn EmbeddingProvider>,
        extractor: Arc<dyn ConceptExtractor>,
    ) -> Result<Self> {
        snap.params.validate()?;
        let lexical = LexicalIndex::build(&snap.graph, &snap.params);
        Ok(Self {
            lexical,
            prior: snap.prior,
            graph: snap.graph,
            params: snap.params,
            embedder,
            extractor,
            options: RetrieveOptions::default(),
            window_peaks: BTreeMap::new(),
            queries_in_window: 0,
        })
    }

    /// Load a snapshot and attach the offline providers.
    pub fn load(path: &Path) -> Result<Self> {
        let snap = load_snapshot(path)?;
        let (e, x) = default_providers(&snap.params)?;
        Self::from_snapshot(snap, e, x)
    }

    pub fn snapshot(&self) -> Snapshot {
        Snapshot {
            params: self.params.clone(),
            graph: self.graph.clone(),
            prior: self.prior.clone(),
        }
    }

    pub fn save(&self, path: &Path) -> Result<u64> {
        Ok(save_snapshot(&self.snapshot(), path)?)
    }

    pub fn params(&self) -> &HyperParams {
        &self.params
    }

    /// Replace parameters. Embedding settings cannot change once nodes exist.
    pub fn set_params(&mut self, params: HyperParams) -> Result<()> {
        params.validate()?;
        if !self.graph.is_empty()
            && (params.embed_dim != self.params.embed_dim
                || params.embed_seed != self.params.embed_seed)
        {
            return Err(crate::error::ParamError::Invalid {
                name: "embed_dim",
                reason: "embedding settings cannot change on a non-empty store".into(),
            }
            .into());
        }
        self.params = params;
        Ok(())
    }

    pub fn set_diagnostics(&mut self, on: bool) {
        self.options.diagnostics = on;
    }

    pub fn graph(&self) -> &MemoryGraph {
        &self.graph
    }

    pub fn lexical(&self) -> &LexicalIndex {
        &self.lexical
    }

    pub fn prior(&self) -> &StructuralPrior {
        &self.prior
    }

    pub fn embedder(&self) -> &dyn EmbeddingProvider {
        self.embedder.as_ref()
    }

    fn default_timestamp(&self) -> f64 {
        let t = match self.params.timestamp_unit {
            TimestampUnit::TurnIndex => self.graph.turn_counter() as f64,
            TimestampUnit::EpochSeconds => SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map_or(0.0, |d| d.as_secs_f64()),
        };
        t.max(self.graph.latest_timestamp().unwrap_or(0.0))
    }

    /// Append a turn; every `consolidation_n` turns a consolidation runs.
    pub fn ingest_turn(
        &mut self,
        user_text: &str,
        reply_text: &str,
        timestamp: Option<f64>,
    ) -> Result<IngestOutcome> {
        let ts = timestamp.unwrap_or_else(|| self.default_timestamp());
        let id = self.graph.append_turn(
            user_text,
            reply_text,
            ts,
            self.embedder.as_ref(),
            &self.params,
        )?;
        let text = self.graph.node(id).expect("just inserted").text();
        self.lexical.index_node(id, &text)?;
        let consolidation = if self
            .graph
            .turn_counter()
            .is_multiple_of(self.params.consolidation_n as u64)
        {
            Some(self.consolidate()?)
        } else {
            None
        };
        Ok(IngestOutcome { id, consolidation })
    }

    /// Consolidate now, close the dormancy window and refresh the prior.
    pub fn consolidate(&mut self) -> Result<ConsolidationReport> {
        let report = self.graph.consolidate(
            self.extractor.as_ref(),
            self.embedder.as_ref(),
            &self.params,
        )?;
        for id in report.touched() {
            let text = self.graph.node(id).expect("touched nodes are live").text();
            self.lexical.reindex_node(id, &text);
        }
        if self.queries_in_window > 0 {
            self.graph
                .apply_window_peaks(&self.window_peaks, &self.params);
            for id in report.created() {
                self.graph.set_dormancy_streak(id, 0)?;
            }
        }
        self.window_peaks.clear();
        self.queries_in_window = 0;
        self.prior = compute_pagerank(&self.graph, &self.params);
        Ok(report)
    }

    /// Retrieve and record peak activations for dormancy tracking.
    pub fn query(&mut self, text: &str) -> Result<RetrievalResult> {
        let (result, state) = retrieve_with(
            &self.graph,
            text,
            self.embedder.as_ref(),
            &self.lexical,
            &self.prior,
            &self.params,
            self.options,
        )?;
        if let Some(state) = state {
            for (id, p) in state.peak {
                let e = self.window_peaks.entry(id).or_insert(0.0);
                *e = e.max(p);
            }
            self.queries_in_window += 1;
        }
        Ok(result)
    }

    /// Retrieve without touching any state.
    pub fn retrieve(&self, text: &str) -> Result<RetrievalResult> {
        self.retrieve_with_params(text, &self.params)
    }

    /// Retrieve with different (validated by the caller) parameters against the
    /// same graph, index and prior.
    pub fn retrieve_with_params(
        &self,
        text: &str,
        params: &HyperParams,
    ) -> Result<RetrievalResult> {
        retrieve_with(
            &self.graph,
            text,
            self.embedder.as_ref(),
            &self.lexical,
            &self.prior,
            params,
            self.options,
        )
        .map(|(r, _)| r)
    }

    /// Prune edges, then archive dormant nodes.
    pub fn compact(&mut self) -> Result<CompactReport> {
        let pruned_edges = self.graph.prune_edges(&self.params);
        let archived = self.graph.collect_dormant(&self.params);
        for id in &archived {
            self.lexical.remove_node(*id)?;
        }
        self.prior = compute_pagerank(&self.graph, &self.params);
        Ok(CompactReport {
            pruned_edges,
            archived,
        })
    }

    pub fn restore(&mut self, ids: &[NodeId]) -> Result<()> {
        self.graph.restore_nodes(ids)?;
        for id in ids {
            let text = self
                .graph
                .node(*id)
                .ok_or(GraphError::UnknownNode(*id))?
                .text();
            self.lexical.index_node(*id, &text)?;
        }
        Ok(())
    }

    pub fn stats(&self) -> EngineStats {
        let g = &self.graph;
        let mut s = EngineStats {
            archived_nodes: g.archive().nodes.len(),
            archived_edges: g.archive().edges.len(),
            turns: g.turn_counter(),
            consolidations: g.consolidation_counter(),
            ..Default::default()
        };
        for n in g.nodes() {
            match n.kind() {
                NodeKind::Episodic => s.episodic_nodes += 1,
                NodeKind::Semantic => s.semantic_nodes += 1,
            }
            *s.in_degree_histogram
                .entry(g.in_degree(n.id()))
                .or_insert(0) += 1;
            *s.out_degree_histogram.entry(g.fan(n.id())).or_insert(0) += 1;
        }
        for e in g.edges() {
            match e.kind {
                EdgeKind::Temporal => s.temporal_edges += 1,
                EdgeKind::Abstraction => s.abstraction_edges += 1,
                EdgeKind::Association => s.association_edges += 1,
            }
        }
        s
    }

    /// Ids currently holding peak records for the open window.
    pub fn window_ids(&self) -> BTreeSet<NodeId> {
        self.window_peaks.keys().copied().collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::retrieval::Verdict;

    fn small() -> HyperParams {
        HyperParams {
            embed_dim: 64,
            ..HyperParams::default()
        }
    }

    #[test]
    fn cadence_consolidates_every_n_turns() {
        let mut e = Engine::new(small()).unwrap();
        let mut runs = 0;
        for i in 0..10 {
            let out = e
                .ingest_turn(&format!("I met Kendall on day {i}"), "", None)
                .unwrap();
            runs += usize::from(out.consolidation.is_some());
        }
        assert_eq!(runs, 2);
        let s = e.stats();
        assert_eq!((s.episodic_nodes, s.consolidations), (10, 2));
        assert_eq!(s.semantic_nodes, 1);
        assert_eq!(e.lexical().doc_count(), 11);
    }

    #[test]
    fn empty_engine_rejects() {
        let mut e = Engine::new(small()).unwrap();
        assert_eq!(e.query("anything").unwrap().verdict, Verdict::Rejected);
    }

    #[test]
    fn dormancy_follows_queried_windows() {
        let mut p = small();
        p.dormancy_w = 2;
        let mut e = Engine::new(p).unwrap();
        for i in 0..5 {
            e.ingest_turn(&format!("filler turn {i}"), "", None)
                .unwrap();
        }
        // no queries: streaks untouched
        assert!(e.graph().nodes().all(|n| n.dormancy_streak() == 0));
        for round in 0..2 {
            e.query("zebra crossing").unwrap();
            for i in 0..5 {
                e.ingest_turn(&format!("more filler {round} {i}"), "", None)
                    .unwrap();
            }
        }
        let archived = e.compact().unwrap().archived;
        assert!(!archived.is_empty());
        for id in &archived {
            assert!(!e.lexical().contains(*id));
        }
    }

    #[test]
    fn snapshot_round_trip_preserves_retrieval() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.snap");
        let mut e = Engine::new(small()).unwrap();
        for t in [
            "We went on a ski trip with Mark",
            "I love camping",
            "Mark broke up with me",
            "tax forms",
            "ok",
        ] {
            e.ingest_turn(t, "", None).unwrap();
        }
        e.save(&path).unwrap();
        let back = Engine::load(&path).unwrap();
        assert_eq!(back.lexical(), e.lexical());
        for q in ["ski trip", "Mark", "camping"] {
            assert_eq!(back.retrieve(q).unwrap(), e.retrieve(q).unwrap());
        }
    }
}
