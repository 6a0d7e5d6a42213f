//! Seeded generators for synthetic memory graphs, used by tests and benches.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::embedding::EmbeddingProvider;
use crate::extract::Category;
use crate::graph::{EdgeKind, MemoryGraph, NodeKind};
use crate::params::HyperParams;

const ONSETS: [&str; 12] = ["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t"];
const VOWELS: [&str; 5] = ["a", "e", "i", "o", "u"];

/// Deterministic pronounceable word for `i` (distinct for distinct `i`).
pub fn word(i: usize) -> String {
    let mut n = i;
    let mut s = String::new();
    loop {
        s.push_str(ONSETS[n % ONSETS.len()]);
        n /= ONSETS.len();
        s.push_str(VOWELS[n % VOWELS.len()]);
        n /= VOWELS.len();
        if n == 0 {
            break;
        }
        n -= 1;
    }
    s
}

#[derive(Debug, Clone)]
pub struct GraphSpec {
    pub nodes: usize,
    /// Target edge count, temporal edges included.
    pub edges: usize,
    pub semantic_fraction: f64,
    pub vocabulary: usize,
    pub words_per_turn: usize,
}

impl GraphSpec {
    pub fn new(nodes: usize, edges: usize) -> Self {
        Self {
            nodes,
            edges,
            semantic_fraction: 0.3,
            vocabulary: 200,
            words_per_turn: 6,
        }
    }
}

pub fn random_text<R: Rng>(rng: &mut R, vocabulary: usize, words: usize) -> String {
    (0..words.max(1))
        .map(|_| word(rng.random_range(0..vocabulary.max(1))))
        .collect::<Vec<_>>()
        .join(" ")
}

/// A random valid graph: episodes with random text and increasing
/// timestamps, concepts named by single words, and extra edges of the kind
/// matching their endpoints with uniform weights.
pub fn random_graph(
    seed: u64,
    spec: &GraphSpec,
    embedder: &dyn EmbeddingProvider,
    params: &HyperParams,
) -> MemoryGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut g = MemoryGraph::new();
    let mut ts = 0.0;
    for _ in 0..spec.nodes {
        if rng.random_bool(spec.semantic_fraction.clamp(0.0, 1.0)) {
            let name = word(rng.random_range(0..spec.vocabulary.max(1)));
            let emb = embedder.embed(&name).expect("non-empty word");
            let cat = *Category::ALL.choose(&mut rng).expect("non-empty");
            g.insert_semantic(&name, cat, emb, vec![], 1.0)
                .expect("non-empty name");
        } else {
            let text = random_text(&mut rng, spec.vocabulary, spec.words_per_turn);
            let emb = embedder.embed(&text).expect("non-empty text");
            ts += rng.random_range(0.0..3.0);
            g.push_episode(text, emb, ts, params)
                .expect("monotone timestamps");
        }
    }
    let ids: Vec<_> = g.node_ids().collect();
    if ids.len() < 2 {
        return g;
    }
    let mut attempts = 0;
    while g.edge_count() < spec.edges && attempts < spec.edges * 20 {
        attempts += 1;
        let (a, b) = (
            *ids.choose(&mut rng).unwrap(),
            *ids.choose(&mut rng).unwrap(),
        );
        if a == b {
            continue;
        }
        let kind = match (g.node(a).unwrap().kind(), g.node(b).unwrap().kind()) {
            (NodeKind::Episodic, NodeKind::Episodic) => EdgeKind::Temporal,
            (NodeKind::Semantic, NodeKind::Semantic) => EdgeKind::Association,
            _ => EdgeKind::Abstraction,
        };
        let w = rng.random_range(0.05..=1.0);
        let _ = g.add_edge(a, b, kind, w);
    }
    g
}

/// A random query drawn from the same vocabulary as [`random_graph`].
pub fn random_query(seed: u64, spec: &GraphSpec) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let n = rng.random_range(1..=4);
    random_text(&mut rng, spec.vocabulary, n)
}
