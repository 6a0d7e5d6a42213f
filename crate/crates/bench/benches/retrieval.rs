use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use mnemo_bench::core::activation::run_activation;
use mnemo_bench::core::prior::compute_pagerank;
use mnemo_bench::core::synth::{random_graph, random_query, GraphSpec};
use mnemo_bench::core::{retrieve, EmbeddingProvider, HashEmbedder, HyperParams, LexicalIndex};

fn bench_retrieval(c: &mut Criterion) {
    let params = HyperParams::default();
    let emb = HashEmbedder::new(params.embed_dim, params.embed_seed);
    let mut group = c.benchmark_group("retrieve");
    for nodes in [500, 2000, 8000] {
        let spec = GraphSpec::new(nodes, nodes * 4);
        let graph = random_graph(7, &spec, &emb, &params);
        let lexical = LexicalIndex::build(&graph, &params);
        let prior = compute_pagerank(&graph, &params);
        let queries: Vec<String> = (0..16).map(|i| random_query(i, &spec)).collect();
        group.bench_with_input(BenchmarkId::from_parameter(nodes), &queries, |b, qs| {
            let mut i = 0;
            b.iter(|| {
                i = (i + 1) % qs.len();
                black_box(retrieve(&graph, &qs[i], &emb, &lexical, &prior, &params).unwrap())
            })
        });
    }
    group.finish();
}

fn bench_stages(c: &mut Criterion) {
    let params = HyperParams::default();
    let emb = HashEmbedder::new(params.embed_dim, params.embed_seed);
    let spec = GraphSpec::new(2000, 8000);
    let graph = random_graph(11, &spec, &emb, &params);
    let lexical = LexicalIndex::build(&graph, &params);
    let query = random_query(3, &spec);
    let q = emb.embed(&query).unwrap();

    c.bench_function("embed query", |b| {
        b.iter(|| black_box(emb.embed(black_box(&query)).unwrap()))
    });
    c.bench_function("bm25 top 10", |b| {
        b.iter(|| black_box(lexical.bm25_scores(&query, 10)))
    });
    c.bench_function("activation 3 cycles", |b| {
        b.iter(|| black_box(run_activation(&graph, &query, &q, &lexical, &params).unwrap()))
    });
    c.bench_function("pagerank 2000 nodes", |b| {
        b.iter(|| black_box(compute_pagerank(&graph, &params)))
    });
}

criterion_group!(benches, bench_retrieval, bench_stages);
criterion_main!(benches);
