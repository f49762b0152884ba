//! Hindsight ("predictive") infosphere: shortest paths in the horizon-year
//! graph towards what the author actually touches the following year.

use std::collections::{BTreeSet, VecDeque};

use super::{coin, sample_distinct, sort_ranked};
use crate::error::{Error, Result};
use crate::graph::{AuthorId, GraphView, NodeRef, TemporalAcademicGraph, Year};
use crate::rng::Rng;

/// New co-authors, cited papers and topics of the author's `year + 1` output,
/// restricted to nodes that exist at `year`.
pub fn hindsight_targets(
    graph: &TemporalAcademicGraph,
    year: Year,
    author: AuthorId,
) -> Result<BTreeSet<NodeRef>> {
    graph.check_author(author)?;
    if !graph.has_year(year + 1) {
        return Err(Error::HindsightUnavailable(year + 1));
    }
    let view = graph.snapshot(year)?;
    let existing = view.coauthors(author)?;
    let mut targets = BTreeSet::new();
    for p in graph.papers_of_in_year(author, year + 1) {
        for &b in graph.authors_of(p) {
            if b != author && !existing.contains(&b) {
                targets.insert(NodeRef::Author(b));
            }
        }
        for &c in graph.cited_papers(p) {
            if view.has_paper(c) {
                targets.insert(NodeRef::Paper(c));
            }
        }
        for &t in graph.topics_of(p) {
            targets.insert(NodeRef::Topic(t));
        }
    }
    Ok(targets)
}

struct Bfs {
    offsets: [usize; 3],
    dist: Vec<u32>,
    parent: Vec<Option<NodeRef>>,
}

impl Bfs {
    fn slot(&self, n: NodeRef) -> usize {
        match n {
            NodeRef::Author(a) => self.offsets[0] + a.idx(),
            NodeRef::Paper(p) => self.offsets[1] + p.idx(),
            NodeRef::Topic(t) => self.offsets[2] + t.idx(),
        }
    }

    /// Breadth-first search from `source`, expanding neighbours in ascending
    /// order; stops once every target has been reached.
    fn run(view: &GraphView<'_>, source: NodeRef, targets: &BTreeSet<NodeRef>) -> Bfs {
        let g = view.graph();
        let offsets = [0, g.n_authors(), g.n_authors() + g.n_papers()];
        let total = offsets[2] + g.n_topics();
        let mut bfs = Bfs {
            offsets,
            dist: vec![u32::MAX; total],
            parent: vec![None; total],
        };
        let s = bfs.slot(source);
        bfs.dist[s] = 0;
        let mut remaining = targets.iter().filter(|&&t| t != source).count();
        let mut queue = VecDeque::from([source]);
        while let Some(node) = queue.pop_front() {
            if remaining == 0 {
                break;
            }
            let d = bfs.dist[bfs.slot(node)];
            for next in view.neighbors(node) {
                let k = bfs.slot(next);
                if bfs.dist[k] == u32::MAX {
                    bfs.dist[k] = d + 1;
                    bfs.parent[k] = Some(node);
                    if targets.contains(&next) {
                        remaining -= 1;
                    }
                    queue.push_back(next);
                }
            }
        }
        bfs
    }

    fn distance(&self, n: NodeRef) -> Option<u32> {
        let d = self.dist[self.slot(n)];
        (d != u32::MAX).then_some(d)
    }
}

/// Union of one BFS shortest path per reachable hindsight target, scored
/// `1 / (1 + distance)`, plus random zero-score branches off path nodes.
pub fn predictive_infosphere(
    graph: &TemporalAcademicGraph,
    year: Year,
    author: AuthorId,
    noise_branch_prob: f64,
    noise_branch_max: usize,
    rng: &mut Rng,
) -> Result<Vec<(NodeRef, f64)>> {
    let targets = hindsight_targets(graph, year, author)?;
    let view = graph.snapshot(year)?;
    let source = NodeRef::Author(author);
    if targets.is_empty() {
        return Ok(Vec::new());
    }
    let bfs = Bfs::run(&view, source, &targets);

    let mut on_path: BTreeSet<NodeRef> = BTreeSet::new();
    for &t in &targets {
        if bfs.distance(t).is_none() || t == source {
            continue;
        }
        let mut cur = t;
        while cur != source && on_path.insert(cur) {
            cur = bfs.parent[bfs.slot(cur)].expect("reached node has a parent");
        }
    }

    let mut elements: Vec<(NodeRef, f64)> = on_path
        .iter()
        .map(|&n| (n, 1.0 / (1.0 + bfs.distance(n).expect("on path") as f64)))
        .collect();

    if noise_branch_prob > 0.0 && noise_branch_max > 0 {
        let mut included = on_path.clone();
        included.insert(source);
        for &node in &on_path {
            if !coin(rng, noise_branch_prob) {
                continue;
            }
            let count = 1 + (rng_below(rng, noise_branch_max));
            let pool: Vec<NodeRef> = view
                .neighbors(node)
                .into_iter()
                .filter(|n| !included.contains(n))
                .collect();
            for extra in sample_distinct(rng, &pool, count) {
                included.insert(extra);
                elements.push((extra, 0.0));
            }
        }
    }
    sort_ranked(&mut elements);
    Ok(elements)
}

fn rng_below(rng: &mut Rng, n: usize) -> usize {
    use rand::Rng as _;
    rng.random_range(0..n)
}
