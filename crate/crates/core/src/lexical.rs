//! Inverted index with BM25 scoring, used as the lexical anchor trigger.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use crate::error::LexicalError;
use crate::graph::{MemoryGraph, NodeId};
use crate::params::HyperParams;
use crate::text::tokenize;

#[derive(Debug, Clone, PartialEq)]
pub struct LexicalIndex {
    postings: BTreeMap<String, BTreeMap<NodeId, u32>>,
    doc_lengths: BTreeMap<NodeId, usize>,
    total_len: usize,
    k1: f64,
    b: f64,
}

impl Default for LexicalIndex {
    fn default() -> Self {
        Self::new(1.2, 0.75)
    }
}

/// `ln(1 + (N - n + 0.5) / (n + 0.5))`; always positive.
pub fn bm25_idf(doc_count: usize, doc_freq: usize) -> f64 {
    let (n_docs, n) = (doc_count as f64, doc_freq as f64);
    (1.0 + (n_docs - n + 0.5) / (n + 0.5)).ln()
}

impl LexicalIndex {
    pub fn new(k1: f64, b: f64) -> Self {
        Self {
            postings: BTreeMap::new(),
            doc_lengths: BTreeMap::new(),
            total_len: 0,
            k1,
            b,
        }
    }

    pub fn from_params(params: &HyperParams) -> Self {
        Self::new(params.bm25_k1, params.bm25_b)
    }

    /// Index every live node of `graph` in id order.
    pub fn build(graph: &MemoryGraph, params: &HyperParams) -> Self {
        let mut idx = Self::from_params(params);
        for n in graph.nodes() {
            idx.index_node(n.id(), &n.text())
                .expect("graph ids are unique");
        }
        idx
    }

    pub fn doc_count(&self) -> usize {
        self.doc_lengths.len()
    }

    pub fn avg_doc_length(&self) -> f64 {
        if self.doc_lengths.is_empty() {
            0.0
        } else {
            self.total_len as f64 / self.doc_lengths.len() as f64
        }
    }

    pub fn doc_length(&self, id: NodeId) -> Option<usize> {
        self.doc_lengths.get(&id).copied()
    }

    pub fn contains(&self, id: NodeId) -> bool {
        self.doc_lengths.contains_key(&id)
    }

    pub fn term_frequency(&self, term: &str, id: NodeId) -> u32 {
        self.postings
            .get(term)
            .and_then(|p| p.get(&id))
            .copied()
            .unwrap_or(0)
    }

    pub fn doc_frequency(&self, term: &str) -> usize {
        self.postings.get(term).map_or(0, BTreeMap::len)
    }

    pub fn index_node(&mut self, id: NodeId, content: &str) -> Result<(), LexicalError> {
        if self.doc_lengths.contains_key(&id) {
            return Err(LexicalError::Duplicate(id));
        }
        let tokens = tokenize(content);
        for t in &tokens {
            *self
                .postings
                .entry(t.clone())
                .or_default()
                .entry(id)
                .or_insert(0) += 1;
        }
        self.total_len += tokens.len();
        self.doc_lengths.insert(id, tokens.len());
        Ok(())
    }

    pub fn remove_node(&mut self, id: NodeId) -> Result<(), LexicalError> {
        let len = self
            .doc_lengths
            .remove(&id)
            .ok_or(LexicalError::Unknown(id))?;
        self.total_len -= len;
        self.postings.retain(|_, p| {
            p.remove(&id);
            !p.is_empty()
        });
        Ok(())
    }

    /// Replace the indexed text of `id` (indexing it if absent).
    pub fn reindex_node(&mut self, id: NodeId, content: &str) {
        if self.contains(id) {
            self.remove_node(id).expect("present");
        }
        self.index_node(id, content).expect("absent");
    }

    /// BM25 scores of documents sharing at least one query term, best first,
    /// ties by smaller id. Repeated query terms count once.
    pub fn bm25_scores(&self, query: &str, limit: usize) -> Vec<(NodeId, f64)> {
        let terms: BTreeSet<String> = tokenize(query).into_iter().collect();
        if terms.is_empty() || self.doc_lengths.is_empty() {
            return Vec::new();
        }
        let n = self.doc_count();
        let avg = self.avg_doc_length();
        let mut scores: BTreeMap<NodeId, f64> = BTreeMap::new();
        for t in &terms {
            let Some(posting) = self.postings.get(t) else {
                continue;
            };
            let idf = bm25_idf(n, posting.len());
            for (&id, &tf) in posting {
                let tf = tf as f64;
                let len = self.doc_lengths[&id] as f64;
                let norm = if avg > 0.0 { len / avg } else { 0.0 };
                let s =
                    idf * tf * (self.k1 + 1.0) / (tf + self.k1 * (1.0 - self.b + self.b * norm));
                *scores.entry(id).or_insert(0.0) += s;
            }
        }
        let mut ranked: Vec<(NodeId, f64)> = scores.into_iter().collect();
        ranked.sort_by(|a, b| {
            b.1.partial_cmp(&a.1)
                .unwrap_or(Ordering::Equal)
                .then(a.0.cmp(&b.0))
        });
        ranked.truncate(limit);
        ranked
    }
}
