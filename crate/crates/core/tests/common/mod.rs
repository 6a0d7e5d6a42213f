//! Brute-force reference implementations and fixture generators shared by the
//! integration tests. Oracles work on dense arrays and never call into the
//! sparse code paths they check.

#![allow(dead_code)]

use std::collections::BTreeMap;

use mnemo_core::{Category, EdgeKind, Embedding, HyperParams, MemoryGraph, NodeId, NodeKind};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_unit(rng: &mut impl Rng, dim: usize) -> Embedding {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        if let Ok(e) = Embedding::normalized(v) {
            return e;
        }
    }
}

/// Random valid graph with `n` nodes, random unit embeddings of `dim`
/// components and roughly `n * density` extra edges.
pub fn small_graph(
    seed: u64,
    n: usize,
    dim: usize,
    density: f64,
    params: &HyperParams,
) -> MemoryGraph {
    let mut r = rng(seed);
    let mut g = MemoryGraph::new();
    let mut ts = 0.0;
    for i in 0..n {
        let emb = random_unit(&mut r, dim);
        if r.random_bool(0.4) {
            g.insert_semantic(&format!("concept{i}"), Category::Other, emb, vec![], 1.0)
                .unwrap();
        } else {
            ts += r.random_range(0.0..60.0);
            g.push_episode(format!("episode {i}"), emb, ts, params)
                .unwrap();
        }
    }
    let ids: Vec<NodeId> = g.node_ids().collect();
    let target = (n as f64 * density) as usize;
    for _ in 0..target * 4 {
        if g.edge_count() >= target + n {
            break;
        }
        let a = ids[r.random_range(0..ids.len())];
        let b = ids[r.random_range(0..ids.len())];
        if a == b {
            continue;
        }
        let kind = kind_for(&g, a, b);
        let w = if r.random_bool(0.2) {
            1.0
        } else {
            r.random_range(0.0..=1.0)
        };
        let _ = g.add_edge(a, b, kind, w);
    }
    g
}

pub fn kind_for(g: &MemoryGraph, a: NodeId, b: NodeId) -> EdgeKind {
    match (g.node(a).unwrap().kind(), g.node(b).unwrap().kind()) {
        (NodeKind::Episodic, NodeKind::Episodic) => EdgeKind::Temporal,
        (NodeKind::Semantic, NodeKind::Semantic) => EdgeKind::Association,
        _ => EdgeKind::Abstraction,
    }
}

pub fn random_params(r: &mut impl Rng) -> HyperParams {
    HyperParams {
        delta: r.random_range(0.0..=1.0),
        spreading: r.random_range(0.1..=1.5),
        rho: r.random_range(0.0..0.1),
        beta: r.random_range(0.0..=0.5),
        inhibit_m: r.random_range(1..=10),
        gamma: r.random_range(1.0..=10.0),
        theta: r.random_range(0.1..=0.9),
        steps: r.random_range(0..=5),
        fan_effect: r.random_bool(0.7),
        sparse_firing: r.random_bool(0.7),
        anchor_k: 64,
        ..HyperParams::default()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn cosine(a: &Embedding, b: &Embedding) -> f64 {
    let (a, b) = (a.as_slice(), b.as_slice());
    dot(a, b) / (dot(a, a).sqrt() * dot(b, b).sqrt())
}

/// Dense reference of one activation run where every node is an anchor.
/// Returns the activation vector after seeding and after each cycle, indexed
/// like `graph.node_ids()`.
pub fn dense_activation(
    graph: &MemoryGraph,
    query: &Embedding,
    p: &HyperParams,
) -> (Vec<NodeId>, Vec<Vec<f64>>) {
    let ids: Vec<NodeId> = graph.node_ids().collect();
    let n = ids.len();
    let idx: BTreeMap<NodeId, usize> = ids.iter().enumerate().map(|(i, id)| (*id, i)).collect();
    let ts: Vec<f64> = ids
        .iter()
        .map(|id| graph.node(*id).unwrap().timestamp().unwrap_or(0.0))
        .collect();
    // w[i][j]: weight of edge j -> i; fan[j]: out-degree of j.
    let mut w = vec![vec![0.0; n]; n];
    let mut fan = vec![0usize; n];
    for e in graph.edges() {
        let (j, i) = (idx[&e.src], idx[&e.dst]);
        fan[j] += 1;
        w[i][j] = match e.kind {
            EdgeKind::Temporal => (-p.rho * (ts[i] - ts[j]).abs()).exp(),
            _ => e.weight,
        };
    }
    let mut a: Vec<f64> = ids
        .iter()
        .map(|id| (p.alpha * cosine(graph.node(*id).unwrap().embedding(), query)).max(0.0))
        .collect();
    let mut history = vec![a.clone()];
    for _ in 0..p.steps {
        let u: Vec<f64> = (0..n)
            .map(|i| {
                let mut s = (1.0 - p.delta) * a[i];
                for j in 0..n {
                    let f = if p.fan_effect {
                        fan[j].max(1) as f64
                    } else {
                        1.0
                    };
                    s += p.spreading * w[i][j] * a[j] / f;
                }
                s
            })
            .collect();
        let mut order: Vec<usize> = (0..n).filter(|&i| u[i] > 0.0).collect();
        order.sort_by(|&x, &y| u[y].partial_cmp(&u[x]).unwrap().then(x.cmp(&y)));
        order.truncate(p.inhibit_m);
        let uh: Vec<f64> = (0..n)
            .map(|i| {
                if u[i] <= 0.0 {
                    return 0.0;
                }
                let pressure: f64 = order
                    .iter()
                    .map(|&k| u[k])
                    .filter(|&uk| uk > u[i])
                    .map(|uk| uk - u[i])
                    .sum();
                (u[i] - p.beta * pressure).max(0.0)
            })
            .collect();
        a = uh
            .iter()
            .map(|&x| {
                if p.sparse_firing && x <= p.epsilon_dormant {
                    0.0
                } else {
                    1.0 / (1.0 + (-p.gamma * (x - p.theta)).exp())
                }
            })
            .collect();
        history.push(a.clone());
    }
    (ids, history)
}

/// BM25 by direct evaluation of the formula over a token-list corpus.
pub fn brute_bm25(
    docs: &[(NodeId, Vec<String>)],
    query: &[String],
    k1: f64,
    b: f64,
) -> BTreeMap<NodeId, f64> {
    let n = docs.len() as f64;
    let avg = docs.iter().map(|(_, d)| d.len()).sum::<usize>() as f64 / n;
    let mut terms = query.to_vec();
    terms.sort();
    terms.dedup();
    let mut out = BTreeMap::new();
    for (id, doc) in docs {
        let mut score = 0.0;
        let mut hit = false;
        for t in &terms {
            let tf = doc.iter().filter(|x| *x == t).count() as f64;
            if tf == 0.0 {
                continue;
            }
            hit = true;
            let df = docs.iter().filter(|(_, d)| d.contains(t)).count() as f64;
            let idf = (1.0 + (n - df + 0.5) / (df + 0.5)).ln();
            let norm = if avg > 0.0 {
                doc.len() as f64 / avg
            } else {
                0.0
            };
            score += idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * norm));
        }
        if hit {
            out.insert(*id, score);
        }
    }
    out
}

/// Exact PageRank: solve `(I - d M) r = (1 - d) / n` by Gaussian elimination,
/// where `M` is the column-stochastic link matrix with dangling columns uniform.
pub fn exact_pagerank(graph: &MemoryGraph, d: f64) -> BTreeMap<NodeId, f64> {
    let ids: Vec<NodeId> = graph.node_ids().collect();
    let n = ids.len();
    let idx: BTreeMap<NodeId, usize> = ids.iter().enumerate().map(|(i, id)| (*id, i)).collect();
    let mut m = vec![vec![0.0; n]; n];
    for (j, id) in ids.iter().enumerate() {
        let outs: Vec<usize> = graph
            .edges()
            .filter(|e| e.src == *id)
            .map(|e| idx[&e.dst])
            .collect();
        if outs.is_empty() {
            for row in m.iter_mut() {
                row[j] = 1.0 / n as f64;
            }
        } else {
            for i in &outs {
                m[*i][j] += 1.0 / outs.len() as f64;
            }
        }
    }
    let mut a: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let mut row: Vec<f64> = (0..n)
                .map(|j| -d * m[i][j] + if i == j { 1.0 } else { 0.0 })
                .collect();
            row.push((1.0 - d) / n as f64);
            row
        })
        .collect();
    for c in 0..n {
        let piv = (c..n)
            .max_by(|&x, &y| a[x][c].abs().partial_cmp(&a[y][c].abs()).unwrap())
            .unwrap();
        a.swap(c, piv);
        for r in 0..n {
            if r != c {
                let f = a[r][c] / a[c][c];
                #[allow(clippy::needless_range_loop)]
                for k in c..=n {
                    a[r][k] -= f * a[c][k];
                }
            }
        }
    }
    ids.into_iter()
        .enumerate()
        .map(|(i, id)| (id, a[i][n] / a[i][i]))
        .collect()
}
