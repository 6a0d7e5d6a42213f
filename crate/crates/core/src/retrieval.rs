//! Candidate scoring, context ordering and the confidence gate.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write;

use serde::Serialize;

use crate::activation::{dense_ranking, seed_from_ranking, step, ActivationState};
use crate::embedding::EmbeddingProvider;
use crate::error::Result;
use crate::graph::{MemoryGraph, NodeId, NodeKind};
use crate::lexical::LexicalIndex;
use crate::params::HyperParams;
use crate::prior::StructuralPrior;

/// Negative acknowledgement returned for gated queries.
pub const REJECTION_MESSAGE: &str = "I don't have a memory of that.";
/// Rejection message when nothing has been stored yet.
pub const EMPTY_STORE_MESSAGE: &str = "I don't have any memories yet.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Verdict {
    Answerable,
    Rejected,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RetrievalCandidate {
    pub id: NodeId,
    pub kind: NodeKind,
    pub text: String,
    pub timestamp: Option<f64>,
    pub sim: f64,
    pub activation: f64,
    pub prior: f64,
    pub score: f64,
    /// 1-based position in score order (presentation order may differ).
    pub rank: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RetrievalResult {
    /// Presentation order.
    pub candidates: Vec<RetrievalCandidate>,
    pub confidence: f64,
    pub verdict: Verdict,
    pub rejection_message: Option<String>,
}

impl RetrievalResult {
    fn rejected_empty() -> Self {
        Self {
            candidates: Vec::new(),
            confidence: 0.0,
            verdict: Verdict::Rejected,
            rejection_message: Some(EMPTY_STORE_MESSAGE.to_string()),
        }
    }

    /// Candidates in score order.
    pub fn ranked(&self) -> Vec<&RetrievalCandidate> {
        let mut v: Vec<_> = self.candidates.iter().collect();
        v.sort_by_key(|c| c.rank);
        v
    }

    /// 1-based score rank of `id`, if it was returned.
    pub fn rank_of(&self, id: NodeId) -> Option<usize> {
        self.candidates.iter().find(|c| c.id == id).map(|c| c.rank)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RetrieveOptions {
    /// Keep candidates on rejected results for inspection.
    pub diagnostics: bool,
}

/// Rejected iff `confidence < tau_gate`.
pub fn gate(confidence: f64, params: &HyperParams) -> Verdict {
    if confidence < params.tau_gate {
        Verdict::Rejected
    } else {
        Verdict::Answerable
    }
}

/// `lambda1 * max(sim, 0) + lambda2 * activation + lambda3 * prior`.
pub fn fused_score(sim: f64, activation: f64, prior: f64, params: &HyperParams) -> f64 {
    params.lambda1 * sim.max(0.0) + params.lambda2 * activation + params.lambda3 * prior
}

pub fn retrieve(
    graph: &MemoryGraph,
    query_text: &str,
    embedder: &dyn EmbeddingProvider,
    lexical: &LexicalIndex,
    prior: &StructuralPrior,
    params: &HyperParams,
) -> Result<RetrievalResult> {
    retrieve_with(
        graph,
        query_text,
        embedder,
        lexical,
        prior,
        params,
        RetrieveOptions::default(),
    )
    .map(|(r, _)| r)
}

/// Full retrieval; also returns the activation state (absent for an empty store).
pub fn retrieve_with(
    graph: &MemoryGraph,
    query_text: &str,
    embedder: &dyn EmbeddingProvider,
    lexical: &LexicalIndex,
    prior: &StructuralPrior,
    params: &HyperParams,
    opts: RetrieveOptions,
) -> Result<(RetrievalResult, Option<ActivationState>)> {
    if graph.is_empty() {
        return Ok((RetrievalResult::rejected_empty(), None));
    }
    let q = embedder.embed(query_text)?;
    let dense = dense_ranking(graph, &q)?;
    let mut state = seed_from_ranking(graph, query_text, &dense, lexical, params);
    for _ in 0..params.steps {
        step(graph, &mut state, params);
    }

    let sims: BTreeMap<NodeId, f64> = dense.iter().copied().collect();
    let mut pool: BTreeSet<NodeId> = state
        .activation
        .iter()
        .filter(|(_, &a)| a > 0.0)
        .map(|(&id, _)| id)
        .collect();
    pool.extend(dense.iter().take(params.anchor_k).map(|(id, _)| *id));

    let mut scored: Vec<RetrievalCandidate> = pool
        .into_iter()
        .filter_map(|id| {
            let node = graph.node(id)?;
            let sim = sims[&id];
            let activation = state.get(id);
            let pr = prior.lookup(id);
            Some(RetrievalCandidate {
                id,
                kind: node.kind(),
                text: node.text(),
                timestamp: node.timestamp(),
                sim,
                activation,
                prior: pr,
                score: fused_score(sim, activation, pr, params),
                rank: 0,
            })
        })
        .collect();
    scored.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .unwrap_or(Ordering::Equal)
            .then(a.id.cmp(&b.id))
    });
    scored.truncate(params.top_k);
    for (i, c) in scored.iter_mut().enumerate() {
        c.rank = i + 1;
    }

    let confidence = scored.first().map_or(0.0, |c| c.activation);
    let verdict = gate(confidence, params);
    let candidates = if verdict == Verdict::Rejected && !opts.diagnostics {
        Vec::new()
    } else {
        presentation_order(graph, scored)
    };
    let result = RetrievalResult {
        candidates,
        confidence,
        verdict,
        rejection_message: (verdict == Verdict::Rejected).then(|| REJECTION_MESSAGE.to_string()),
    };
    Ok((result, Some(state)))
}

/// Episodes in timestamp order; each concept placed right before its most
/// strongly linked episode among the candidates; unlinked concepts first.
pub fn presentation_order(
    graph: &MemoryGraph,
    scored: Vec<RetrievalCandidate>,
) -> Vec<RetrievalCandidate> {
    let (mut episodes, concepts): (Vec<_>, Vec<_>) = scored
        .into_iter()
        .partition(|c| c.kind == NodeKind::Episodic);
    episodes.sort_by(|a, b| {
        a.timestamp
            .partial_cmp(&b.timestamp)
            .unwrap_or(Ordering::Equal)
            .then(a.id.cmp(&b.id))
    });
    let position: BTreeMap<NodeId, usize> = episodes
        .iter()
        .enumerate()
        .map(|(i, c)| (c.id, i))
        .collect();

    let mut attached: BTreeMap<usize, Vec<RetrievalCandidate>> = BTreeMap::new();
    let mut orphans = Vec::new();
    // `concepts` is still in score order.
    for c in concepts {
        let mut best: Option<(f64, usize)> = None;
        let links = graph
            .outgoing(c.id)
            .map(|e| (e.dst, e.weight))
            .chain(graph.incoming(c.id).map(|e| (e.src, e.weight)));
        for (other, w) in links {
            if let Some(&p) = position.get(&other) {
                let better = match best {
                    None => true,
                    Some((bw, bp)) => w > bw || (w == bw && p < bp),
                };
                if better {
                    best = Some((w, p));
                }
            }
        }
        match best {
            Some((_, p)) => attached.entry(p).or_default().push(c),
            None => orphans.push(c),
        }
    }
    let mut out = orphans;
    for (i, e) in episodes.into_iter().enumerate() {
        if let Some(cs) = attached.remove(&i) {
            out.extend(cs);
        }
        out.push(e);
    }
    out
}

/// Evidence-constrained answering prompt over candidates in presentation order.
pub fn build_verification_prompt(query: &str, candidates: &[RetrievalCandidate]) -> String {
    let mut out = String::from("Evidence from memory:\n");
    for (i, c) in candidates.iter().enumerate() {
        let when = match c.timestamp {
            Some(t) => format!("t={t}"),
            None => "concept".to_string(),
        };
        let _ = writeln!(
            out,
            "[{}] (node {}, {}) {}",
            i + 1,
            c.id,
            when,
            c.text.replace('\n', " / ")
        );
    }
    let _ = writeln!(out, "\nQuestion: {query}");
    out.push_str(
        "Answer using only the evidence above. Is this EXPLICITLY mentioned? If not, output 'Not mentioned'.\n",
    );
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::{Embedding, HashEmbedder};
    use crate::extract::Category;
    use crate::graph::EdgeKind;

    fn cand(id: u64, kind: NodeKind, ts: Option<f64>, score: f64) -> RetrievalCandidate {
        RetrievalCandidate {
            id: NodeId(id),
            kind,
            text: format!("node {id}"),
            timestamp: ts,
            sim: 0.0,
            activation: 0.0,
            prior: 0.0,
            score,
            rank: 0,
        }
    }

    #[test]
    fn gate_boundaries() {
        let mut p = HyperParams::default();
        assert_eq!(gate(0.12, &p), Verdict::Answerable);
        assert_eq!(gate(0.0, &p), Verdict::Rejected);
        p.tau_gate = 0.0;
        assert_eq!(gate(0.0, &p), Verdict::Answerable);
    }

    #[test]
    fn singleton_identical_to_query() {
        let e = HashEmbedder::new(64, 9);
        let p = HyperParams::default();
        let mut g = MemoryGraph::new();
        let id = g.append_turn("green jacket", "", 0.0, &e, &p).unwrap();
        let lex = LexicalIndex::build(&g, &p);
        let prior = crate::prior::compute_pagerank(&g, &p);
        let r = retrieve(&g, "green jacket", &e, &lex, &prior, &p).unwrap();
        assert_eq!(r.candidates[0].id, id);
        assert_eq!(r.verdict, Verdict::Answerable);
        let c = &r.candidates[0];
        assert!((c.score - fused_score(c.sim, c.activation, c.prior, &p)).abs() < 1e-12);
    }

    #[test]
    fn empty_store_short_circuits() {
        let e = HashEmbedder::new(64, 9);
        let p = HyperParams::default();
        let g = MemoryGraph::new();
        let r = retrieve(
            &g,
            "anything",
            &e,
            &LexicalIndex::default(),
            &StructuralPrior::default(),
            &p,
        )
        .unwrap();
        assert_eq!(r.verdict, Verdict::Rejected);
        assert_eq!(r.rejection_message.as_deref(), Some(EMPTY_STORE_MESSAGE));
    }

    #[test]
    fn concepts_sit_before_their_strongest_episode() {
        let mut g = MemoryGraph::new();
        let p = HyperParams::default();
        let e1 = g
            .push_episode("first".into(), Embedding::basis(8, 0), 1.0, &p)
            .unwrap();
        let e2 = g
            .push_episode("second".into(), Embedding::basis(8, 1), 2.0, &p)
            .unwrap();
        let s = g
            .insert_semantic(
                "topic",
                Category::Event,
                Embedding::basis(8, 2),
                vec![],
                1.0,
            )
            .unwrap();
        let orphan = g
            .insert_semantic(
                "lonely",
                Category::Other,
                Embedding::basis(8, 3),
                vec![],
                1.0,
            )
            .unwrap();
        g.add_edge(e1, s, EdgeKind::Abstraction, 0.3).unwrap();
        g.add_edge(s, e2, EdgeKind::Abstraction, 0.8).unwrap();
        let scored = vec![
            cand(s.0, NodeKind::Semantic, None, 0.9),
            cand(e2.0, NodeKind::Episodic, Some(2.0), 0.8),
            cand(orphan.0, NodeKind::Semantic, None, 0.7),
            cand(e1.0, NodeKind::Episodic, Some(1.0), 0.6),
        ];
        let order: Vec<_> = presentation_order(&g, scored)
            .iter()
            .map(|c| c.id)
            .collect();
        assert_eq!(order, vec![orphan, e1, s, e2]);
    }

    #[test]
    fn verification_prompt_lists_evidence() {
        let cs = vec![
            cand(4, NodeKind::Episodic, Some(1.0), 0.5),
            cand(9, NodeKind::Semantic, None, 0.4),
            cand(2, NodeKind::Episodic, Some(3.0), 0.3),
        ];
        let prompt = build_verification_prompt("who?", &cs);
        assert_eq!(
            prompt.matches("\n[").count() + usize::from(prompt.starts_with('[')),
            3
        );
        let (a, b, c) = (
            prompt.find("(node 4,").unwrap(),
            prompt.find("(node 9,").unwrap(),
            prompt.find("(node 2,").unwrap(),
        );
        assert!(a < b && b < c);
        assert!(prompt.contains("Not mentioned"));
        assert_eq!(prompt, build_verification_prompt("who?", &cs));
    }
}
