//! Popularity-based infospheres.

use std::collections::HashMap;

use super::sort_ranked;
use crate::error::Result;
use crate::graph::{AuthorId, GraphView, NodeRef, PaperId, TopicId};

fn popularity_table(view: &GraphView<'_>) -> Vec<(PaperId, usize)> {
    view.papers()
        .map(|p| (p, view.paper_popularity(p).expect("paper is in view")))
        .collect()
}

/// The `top_n` most-cited papers in the view; identical for every author.
pub fn top_paper_infosphere(view: &GraphView<'_>, top_n: usize) -> Vec<(NodeRef, f64)> {
    let mut scored: Vec<(NodeRef, f64)> = popularity_table(view)
        .into_iter()
        .map(|(p, pop)| (NodeRef::Paper(p), pop as f64))
        .collect();
    sort_ranked(&mut scored);
    scored.truncate(top_n);
    scored
}

/// Papers scored by `(1 + popularity) * affinity`, where affinity is the share
/// of the author's in-view papers on the paper's topic. Zero-affinity papers
/// are dropped. Authors without papers get the plain popularity ranking.
pub fn top_paper_topic_infosphere(
    view: &GraphView<'_>,
    author: AuthorId,
    top_n: usize,
) -> Result<Vec<(NodeRef, f64)>> {
    view.graph().check_author(author)?;
    let mut topic_counts: HashMap<TopicId, usize> = HashMap::new();
    let mut total = 0usize;
    for p in view.papers_of(author) {
        total += 1;
        for &t in view.topics_of(p) {
            *topic_counts.entry(t).or_default() += 1;
        }
    }
    if total == 0 {
        return Ok(top_paper_infosphere(view, top_n));
    }
    let affinity = |p: PaperId| -> f64 {
        view.topics_of(p)
            .iter()
            .map(|t| topic_counts.get(t).copied().unwrap_or(0) as f64 / total as f64)
            .fold(0.0, f64::max)
    };
    let mut scored: Vec<(NodeRef, f64)> = popularity_table(view)
        .into_iter()
        .map(|(p, pop)| (NodeRef::Paper(p), (1.0 + pop as f64) * affinity(p)))
        .filter(|&(_, s)| s > 0.0)
        .collect();
    sort_ranked(&mut scored);
    scored.truncate(top_n);
    Ok(scored)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{generate_synthetic_graph, GraphBuilder, SynthGraphConfig, TemporalAcademicGraph};
    use proptest::prelude::*;

    fn pid(n: &NodeRef) -> u32 {
        n.raw_id()
    }

    #[test]
    fn ties_broken_by_id() {
        // popularity: p1 = 3, p2 = 5, p3 = 5
        let mut b = GraphBuilder::new();
        for p in 0..14 {
            b.paper(p, 2000);
        }
        for c in 4..7 {
            b.cites(c, 1);
        }
        for c in 4..9 {
            b.cites(c, 2);
        }
        for c in 9..14 {
            b.cites(c, 3);
        }
        let g = b.build().unwrap();
        let v = g.snapshot(2000).unwrap();
        let top = top_paper_infosphere(&v, 2);
        assert_eq!(top.iter().map(|e| pid(&e.0)).collect::<Vec<_>>(), vec![2, 3]);
        assert_eq!(top[0].1, 5.0);
        assert!(top_paper_infosphere(&v, 0).is_empty());
        assert_eq!(top_paper_infosphere(&v, 100).len(), 14);
    }

    fn topic_graph() -> TemporalAcademicGraph {
        // author 0 writes only on topic 0; p_t = 1 (topic 0, pop 1), p_s = 2 (topic 1, pop 9)
        let mut b = GraphBuilder::new();
        b.author(0).author(1).topic(0).topic(1);
        for p in 0..13 {
            b.paper(p, 2000);
        }
        b.writes(0, 0).about(0, 0).about(1, 0).about(2, 1);
        b.cites(3, 1);
        for c in 4..13 {
            b.cites(c, 2);
        }
        b.build().unwrap()
    }

    #[test]
    fn zero_affinity_excluded() {
        let g = topic_graph();
        let v = g.snapshot(2000).unwrap();
        let top = top_paper_topic_infosphere(&v, AuthorId(0), 1).unwrap();
        assert_eq!(top, vec![(NodeRef::Paper(PaperId(1)), 2.0)]);
    }

    #[test]
    fn paperless_author_falls_back_to_popularity() {
        let g = topic_graph();
        let v = g.snapshot(2000).unwrap();
        assert_eq!(
            top_paper_topic_infosphere(&v, AuthorId(1), 5).unwrap(),
            top_paper_infosphere(&v, 5)
        );
    }

    #[test]
    fn disjoint_topic_histories_differ() {
        let g = generate_synthetic_graph(&SynthGraphConfig::default()).unwrap();
        let v = g.snapshot(2017).unwrap();
        // two authors whose in-view topics are disjoint
        let topics = |a: AuthorId| -> std::collections::BTreeSet<TopicId> {
            v.papers_of(a).flat_map(|p| v.topics_of(p).to_vec()).collect()
        };
        let authors: Vec<AuthorId> = g.authors().filter(|&a| !topics(a).is_empty()).collect();
        let pair = authors
            .iter()
            .flat_map(|&a| authors.iter().map(move |&b| (a, b)))
            .find(|&(a, b)| topics(a).is_disjoint(&topics(b)))
            .expect("some disjoint pair");
        let a = top_paper_topic_infosphere(&v, pair.0, 10).unwrap();
        let b = top_paper_topic_infosphere(&v, pair.1, 10).unwrap();
        assert_ne!(a, b);
    }

    fn brute_force(v: &GraphView<'_>, author: AuthorId, n: usize) -> Vec<(NodeRef, f64)> {
        let mine: Vec<PaperId> = v.papers_of(author).collect();
        let mut all: Vec<(u32, f64)> = Vec::new();
        for p in v.papers() {
            let pop = v.cites_edges().filter(|&(_, d)| d == p).count() as f64;
            let score = if mine.is_empty() {
                pop
            } else {
                let t = v.topics_of(p)[0];
                let same = mine.iter().filter(|&&q| v.topics_of(q)[0] == t).count();
                (1.0 + pop) * (same as f64 / mine.len() as f64)
            };
            if mine.is_empty() || score > 0.0 {
                all.push((p.0, score));
            }
        }
        // selection by repeated max scan rather than a sort
        let mut out = Vec::new();
        while out.len() < n && !all.is_empty() {
            let mut best = 0;
            for i in 1..all.len() {
                if all[i].1 > all[best].1 || (all[i].1 == all[best].1 && all[i].0 < all[best].0) {
                    best = i;
                }
            }
            let (p, s) = all.swap_remove(best);
            out.push((NodeRef::Paper(PaperId(p)), s));
        }
        out
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn matches_brute_force(seed in 0u64..1000, n in 0usize..15) {
            let g = generate_synthetic_graph(&SynthGraphConfig {
                years: 2,
                authors_per_year: 10,
                papers_per_year: 25,
                rng_seed: seed,
                ..SynthGraphConfig::default()
            }).unwrap();
            let v = g.snapshot(2016).unwrap();
            for a in g.authors().take(6) {
                prop_assert_eq!(top_paper_topic_infosphere(&v, a, n).unwrap(), brute_force(&v, a, n));
            }
            // plain popularity: a paperless author in the brute force equals top_paper
            let g2 = generate_synthetic_graph(&SynthGraphConfig {
                years: 2, authors_per_year: 10, papers_per_year: 50, rng_seed: seed,
                ..SynthGraphConfig::default()
            }).unwrap();
            let v2 = g2.snapshot(2016).unwrap();
            let expected: Vec<_> = {
                let mut all: Vec<(NodeRef, f64)> = v2.papers()
                    .map(|p| (NodeRef::Paper(p), v2.cites_edges().filter(|&(_, d)| d == p).count() as f64))
                    .collect();
                all.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
                all.into_iter().take(10).collect()
            };
            prop_assert_eq!(top_paper_infosphere(&v2, 10), expected);
        }
    }
}
