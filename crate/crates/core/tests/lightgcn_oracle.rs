//! LightGCN propagation against a dense normalized-adjacency oracle, and
//! training behaviour on a planted two-block instance.

use infosphere_core::graph::{GraphBuilder, GraphView, TemporalAcademicGraph};
use infosphere_core::recommenders::{
    lightgcn_recommend, lightgcn_train, propagate, BipartiteAdjacency, LightGcnConfig,
};
use infosphere_core::rng::rng_from;
use proptest::prelude::*;
use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random bipartite graph with at most 20 author + paper nodes.
fn small_graph(seed: u64) -> TemporalAcademicGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_a = rng.random_range(1..=8u32);
    let n_p = rng.random_range(1..=(20 - n_a).min(12));
    let mut b = GraphBuilder::new();
    for a in 0..n_a {
        b.author(a);
    }
    for p in 0..n_p {
        b.paper(p, 2020 + rng.random_range(0..2));
        // some papers stay authorless to exercise zero-degree rows
        for a in 0..n_a {
            if rng.random_bool(0.3) {
                b.writes(a, p);
            }
        }
    }
    b.build().unwrap()
}

fn full_view(g: &TemporalAcademicGraph) -> GraphView<'_> {
    g.snapshot(g.year_range().unwrap().1).unwrap()
}

fn random_matrix(rows: usize, dim: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..rows * dim).map(|_| rng.random_range(-1.0..1.0)).collect()
}

/// mean over k = 0..=layers of Â^k E with Â = D^{-1/2} A D^{-1/2}, computed densely.
fn dense_oracle(view: &GraphView<'_>, adj: &BipartiteAdjacency, e: &[f64], dim: usize, layers: usize) -> Vec<f64> {
    let n_a = adj.n_authors;
    let n = n_a + adj.n_papers();
    let mut a = vec![vec![0.0; n]; n];
    for (author, paper) in view.writes_edges() {
        let j = n_a + adj.paper_row(paper).unwrap();
        a[author.idx()][j] = 1.0;
        a[j][author.idx()] = 1.0;
    }
    let deg: Vec<f64> = a.iter().map(|r| r.iter().sum()).collect();
    let norm: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| if a[i][j] == 0.0 { 0.0 } else { a[i][j] / (deg[i] * deg[j]).sqrt() })
                .collect()
        })
        .collect();
    let mut cur = e.to_vec();
    let mut sum = e.to_vec();
    for _ in 0..layers {
        let mut next = vec![0.0; n * dim];
        for i in 0..n {
            for j in 0..n {
                if norm[i][j] != 0.0 {
                    for d in 0..dim {
                        next[i * dim + d] += norm[i][j] * cur[j * dim + d];
                    }
                }
            }
        }
        sum.iter_mut().zip(&next).for_each(|(s, x)| *s += x);
        cur = next;
    }
    sum.iter().map(|s| s / (layers as f64 + 1.0)).collect()
}

#[test]
fn propagation_matches_dense_oracle_on_small_graphs() {
    let mut checked = 0;
    for seed in 0..60u64 {
        let g = small_graph(seed);
        let view = full_view(&g);
        let adj = BipartiteAdjacency::from_view(&view);
        assert!(adj.n_authors + adj.n_papers() <= 20);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
        for (dim, layers) in [(1, 1), (3, 2), (4, 3)] {
            let ea = random_matrix(adj.n_authors, dim, &mut rng);
            let ep = random_matrix(adj.n_papers(), dim, &mut rng);
            let (pa, pp) = propagate(&adj, &ea, &ep, dim, layers);
            let stacked: Vec<f64> = ea.iter().chain(&ep).copied().collect();
            let oracle = dense_oracle(&view, &adj, &stacked, dim, layers);
            for (i, (x, y)) in pa.iter().chain(&pp).zip(&oracle).enumerate() {
                assert!((x - y).abs() <= 1e-10, "seed {seed} dim {dim} layers {layers} coord {i}: {x} vs {y}");
            }
            checked += 1;
        }
    }
    assert_eq!(checked, 180);
}

proptest! {
    #[test]
    fn propagation_is_linear(seed in 0u64..5000, alpha in -3.0f64..3.0, beta in -3.0f64..3.0) {
        let g = small_graph(seed);
        let view = full_view(&g);
        let adj = BipartiteAdjacency::from_view(&view);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dim = 3;
        let (a1, p1) = (random_matrix(adj.n_authors, dim, &mut rng), random_matrix(adj.n_papers(), dim, &mut rng));
        let (a2, p2) = (random_matrix(adj.n_authors, dim, &mut rng), random_matrix(adj.n_papers(), dim, &mut rng));
        let mix = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(u, v)| alpha * u + beta * v).collect::<Vec<_>>();
        let (ma, mp) = propagate(&adj, &mix(&a1, &a2), &mix(&p1, &p2), dim, 2);
        let (ra, rp) = propagate(&adj, &a1, &p1, dim, 2);
        let (sa, sp) = propagate(&adj, &a2, &p2, dim, 2);
        let expect: Vec<f64> = mix(&ra, &sa).into_iter().chain(mix(&rp, &sp)).collect();
        for (x, y) in ma.iter().chain(&mp).zip(&expect) {
            prop_assert!((x - y).abs() <= 1e-10);
        }
    }
}

/// 20 authors and 40 papers split into two blocks; authors only write papers
/// of their own block.
fn planted_two_blocks() -> TemporalAcademicGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut b = GraphBuilder::new();
    for a in 0..20 {
        b.author(a);
    }
    for p in 0..40 {
        b.paper(p, 2020);
    }
    for a in 0..20u32 {
        let base = if a < 10 { 0 } else { 20 };
        let mut mine = Vec::new();
        while mine.len() < 6 {
            let p = base + rng.random_range(0..20u32);
            if !mine.contains(&p) {
                mine.push(p);
                b.writes(a, p);
            }
        }
    }
    b.build().unwrap()
}

#[test]
fn planted_blocks_are_learned() {
    let g = planted_two_blocks();
    let view = g.snapshot(2020).unwrap();
    let cfg = LightGcnConfig {
        epochs: 150,
        ..LightGcnConfig::default()
    };
    let emb = lightgcn_train(&view, &cfg, &mut rng_from(7, &[])).unwrap();
    assert!(emb.history.last().unwrap() < emb.history.first().unwrap(), "{:?}", emb.history);
    let mut within = 0;
    for a in g.authors() {
        let top = lightgcn_recommend(&emb, &view, a, 1).unwrap();
        let paper = top[0].0.raw_id();
        if (a.0 < 10) == (paper < 20) {
            within += 1;
        }
    }
    let rate = within as f64 / 20.0;
    assert!(rate >= 0.9, "within-block top-1 rate {rate}");
}
