//! Temporal heterogeneous academic graph: authors, papers and topics, with
//! `writes`, `cites` and `about` edges. Only papers carry a publication year;
//! authors and topics are timeless.

mod generate;
mod io;

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use generate::{generate_synthetic_graph, SynthGraphConfig};
pub use io::{load_graph, parse_graph, save_graph, write_graph};

pub type Year = i32;

macro_rules! node_id {
    ($name:ident, $kind:literal) => {
        #[derive(
            Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
        )]
        #[serde(transparent)]
        pub struct $name(pub u32);

        impl $name {
            pub const KIND: &'static str = $kind;

            #[inline]
            pub fn idx(self) -> usize {
                self.0 as usize
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}", self.0)
            }
        }
    };
}

node_id!(AuthorId, "author");
node_id!(PaperId, "paper");
node_id!(TopicId, "topic");

/// A reference to any node of the graph. Ordering is class first
/// (author < paper < topic), then id.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum NodeRef {
    Author(AuthorId),
    Paper(PaperId),
    Topic(TopicId),
}

impl NodeRef {
    pub fn class_name(self) -> &'static str {
        match self {
            NodeRef::Author(_) => "author",
            NodeRef::Paper(_) => "paper",
            NodeRef::Topic(_) => "topic",
        }
    }

    pub fn raw_id(self) -> u32 {
        match self {
            NodeRef::Author(a) => a.0,
            NodeRef::Paper(p) => p.0,
            NodeRef::Topic(t) => t.0,
        }
    }

    pub fn parse(class: &str, id: u32) -> Option<NodeRef> {
        match class {
            "author" => Some(NodeRef::Author(AuthorId(id))),
            "paper" => Some(NodeRef::Paper(PaperId(id))),
            "topic" => Some(NodeRef::Topic(TopicId(id))),
            _ => None,
        }
    }
}

/// Immutable academic graph. Construct through [`GraphBuilder`], which checks
/// every structural invariant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemporalAcademicGraph {
    paper_years: Vec<Year>,
    n_authors: usize,
    n_topics: usize,
    writes: Vec<(AuthorId, PaperId)>,
    cites: Vec<(PaperId, PaperId)>,
    about: Vec<(PaperId, TopicId)>,
    papers_of_author: Vec<Vec<PaperId>>,
    authors_of_paper: Vec<Vec<AuthorId>>,
    cites_out: Vec<Vec<PaperId>>,
    cited_by: Vec<Vec<PaperId>>,
    topics_of_paper: Vec<Vec<TopicId>>,
    papers_of_topic: Vec<Vec<PaperId>>,
}

/// Accumulates nodes and edges; `build` validates and indexes them.
#[derive(Debug, Default, Clone)]
pub struct GraphBuilder {
    authors: Vec<u32>,
    papers: Vec<(u32, Year)>,
    topics: Vec<u32>,
    writes: Vec<(u32, u32)>,
    cites: Vec<(u32, u32)>,
    about: Vec<(u32, u32)>,
}

impl GraphBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn author(&mut self, id: u32) -> &mut Self {
        self.authors.push(id);
        self
    }

    pub fn paper(&mut self, id: u32, year: Year) -> &mut Self {
        self.papers.push((id, year));
        self
    }

    pub fn topic(&mut self, id: u32) -> &mut Self {
        self.topics.push(id);
        self
    }

    pub fn writes(&mut self, author: u32, paper: u32) -> &mut Self {
        self.writes.push((author, paper));
        self
    }

    pub fn cites(&mut self, citing: u32, cited: u32) -> &mut Self {
        self.cites.push((citing, cited));
        self
    }

    pub fn about(&mut self, paper: u32, topic: u32) -> &mut Self {
        self.about.push((paper, topic));
        self
    }

    pub fn build(&self) -> Result<TemporalAcademicGraph> {
        let n_authors = dense_count("author", self.authors.iter().copied())?;
        let n_topics = dense_count("topic", self.topics.iter().copied())?;
        let n_papers = dense_count("paper", self.papers.iter().map(|p| p.0))?;
        let mut paper_years = vec![0; n_papers];
        for &(id, year) in &self.papers {
            paper_years[id as usize] = year;
        }

        let check = |kind: &str, id: u32, n: usize| -> Result<()> {
            if (id as usize) < n {
                Ok(())
            } else {
                Err(Error::Integrity(format!(
                    "edge references undeclared {kind} {id}"
                )))
            }
        };

        let mut writes = Vec::with_capacity(self.writes.len());
        for &(a, p) in &self.writes {
            check("author", a, n_authors)?;
            check("paper", p, n_papers)?;
            writes.push((AuthorId(a), PaperId(p)));
        }
        let mut cites = Vec::with_capacity(self.cites.len());
        for &(c, d) in &self.cites {
            check("paper", c, n_papers)?;
            check("paper", d, n_papers)?;
            if c == d {
                return Err(Error::Integrity(format!("paper {c} cites itself")));
            }
            if paper_years[c as usize] < paper_years[d as usize] {
                return Err(Error::Integrity(format!(
                    "paper {c} ({}) cites later paper {d} ({})",
                    paper_years[c as usize], paper_years[d as usize]
                )));
            }
            cites.push((PaperId(c), PaperId(d)));
        }
        let mut about = Vec::with_capacity(self.about.len());
        for &(p, t) in &self.about {
            check("paper", p, n_papers)?;
            check("topic", t, n_topics)?;
            about.push((PaperId(p), TopicId(t)));
        }
        sort_unique("writes", &mut writes)?;
        sort_unique("cites", &mut cites)?;
        sort_unique("about", &mut about)?;

        let mut papers_of_author = vec![Vec::new(); n_authors];
        let mut authors_of_paper = vec![Vec::new(); n_papers];
        for &(a, p) in &writes {
            papers_of_author[a.idx()].push(p);
            authors_of_paper[p.idx()].push(a);
        }
        let mut cites_out = vec![Vec::new(); n_papers];
        let mut cited_by = vec![Vec::new(); n_papers];
        for &(c, d) in &cites {
            cites_out[c.idx()].push(d);
            cited_by[d.idx()].push(c);
        }
        let mut topics_of_paper = vec![Vec::new(); n_papers];
        let mut papers_of_topic = vec![Vec::new(); n_topics];
        for &(p, t) in &about {
            topics_of_paper[p.idx()].push(t);
            papers_of_topic[t.idx()].push(p);
        }
        for list in papers_of_author.iter_mut() {
            list.sort_unstable();
        }
        for list in authors_of_paper.iter_mut() {
            list.sort_unstable();
        }
        for list in cited_by.iter_mut() {
            list.sort_unstable();
        }
        for list in papers_of_topic.iter_mut() {
            list.sort_unstable();
        }

        Ok(TemporalAcademicGraph {
            paper_years,
            n_authors,
            n_topics,
            writes,
            cites,
            about,
            papers_of_author,
            authors_of_paper,
            cites_out,
            cited_by,
            topics_of_paper,
            papers_of_topic,
        })
    }
}

fn dense_count(kind: &str, ids: impl Iterator<Item = u32>) -> Result<usize> {
    let mut seen: Vec<bool> = Vec::new();
    for id in ids {
        let i = id as usize;
        if i >= seen.len() {
            seen.resize(i + 1, false);
        }
        if seen[i] {
            return Err(Error::Integrity(format!("duplicate {kind} id {id}")));
        }
        seen[i] = true;
    }
    if let Some(missing) = seen.iter().position(|&s| !s) {
        return Err(Error::Integrity(format!(
            "{kind} ids must be dense; {missing} is missing"
        )));
    }
    Ok(seen.len())
}

fn sort_unique<T: Ord + Copy + fmt::Debug>(kind: &str, edges: &mut [T]) -> Result<()> {
    edges.sort_unstable();
    if let Some(w) = edges.windows(2).find(|w| w[0] == w[1]) {
        return Err(Error::Integrity(format!("duplicate {kind} edge {:?}", w[0])));
    }
    Ok(())
}

impl TemporalAcademicGraph {
    pub fn empty() -> Self {
        GraphBuilder::new().build().expect("empty graph is valid")
    }

    pub fn n_authors(&self) -> usize {
        self.n_authors
    }

    pub fn n_papers(&self) -> usize {
        self.paper_years.len()
    }

    pub fn n_topics(&self) -> usize {
        self.n_topics
    }

    pub fn authors(&self) -> impl Iterator<Item = AuthorId> + '_ {
        (0..self.n_authors as u32).map(AuthorId)
    }

    pub fn papers(&self) -> impl Iterator<Item = PaperId> + '_ {
        (0..self.paper_years.len() as u32).map(PaperId)
    }

    pub fn topics(&self) -> impl Iterator<Item = TopicId> + '_ {
        (0..self.n_topics as u32).map(TopicId)
    }

    pub fn writes_edges(&self) -> &[(AuthorId, PaperId)] {
        &self.writes
    }

    pub fn cites_edges(&self) -> &[(PaperId, PaperId)] {
        &self.cites
    }

    pub fn about_edges(&self) -> &[(PaperId, TopicId)] {
        &self.about
    }

    pub fn paper_year(&self, paper: PaperId) -> Result<Year> {
        self.paper_years
            .get(paper.idx())
            .copied()
            .ok_or(Error::Lookup {
                kind: "paper",
                id: paper.0 as u64,
            })
    }

    /// `(year_min, year_max)` over paper years; `None` for a paper-less graph.
    pub fn year_range(&self) -> Option<(Year, Year)> {
        let min = self.paper_years.iter().min()?;
        let max = self.paper_years.iter().max()?;
        Some((*min, *max))
    }

    pub fn has_year(&self, year: Year) -> bool {
        self.paper_years.contains(&year)
    }

    pub fn check_author(&self, author: AuthorId) -> Result<()> {
        if author.idx() < self.n_authors {
            Ok(())
        } else {
            Err(Error::Lookup {
                kind: "author",
                id: author.0 as u64,
            })
        }
    }

    pub fn check_paper(&self, paper: PaperId) -> Result<()> {
        self.paper_year(paper).map(|_| ())
    }

    pub fn papers_of(&self, author: AuthorId) -> &[PaperId] {
        &self.papers_of_author[author.idx()]
    }

    pub fn authors_of(&self, paper: PaperId) -> &[AuthorId] {
        &self.authors_of_paper[paper.idx()]
    }

    pub fn cited_papers(&self, paper: PaperId) -> &[PaperId] {
        &self.cites_out[paper.idx()]
    }

    pub fn topics_of(&self, paper: PaperId) -> &[TopicId] {
        &self.topics_of_paper[paper.idx()]
    }

    /// Year-bounded view. Errors when `year` lies outside the paper-year range.
    pub fn snapshot(&self, year: Year) -> Result<GraphView<'_>> {
        match self.year_range() {
            Some((lo, hi)) if (lo..=hi).contains(&year) => Ok(GraphView {
                base: self,
                horizon: year,
            }),
            Some((lo, hi)) => Err(Error::Range {
                year,
                range: format!("[{lo}, {hi}]"),
            }),
            None => Err(Error::Range {
                year,
                range: "(empty)".into(),
            }),
        }
    }

    /// Authors with at least one paper published exactly in `year`.
    pub fn active_authors(&self, year: Year) -> BTreeSet<AuthorId> {
        self.papers()
            .filter(|p| self.paper_years[p.idx()] == year)
            .flat_map(|p| self.authors_of(p).iter().copied())
            .collect()
    }

    /// Papers published exactly in `year` by `author`.
    pub fn papers_of_in_year(&self, author: AuthorId, year: Year) -> Vec<PaperId> {
        self.papers_of(author)
            .iter()
            .copied()
            .filter(|p| self.paper_years[p.idx()] == year)
            .collect()
    }
}

/// The subgraph of everything dated at or before `horizon`. Authors and
/// topics are always present; `writes` and `about` edges inherit their
/// paper's year.
#[derive(Debug, Clone, Copy)]
pub struct GraphView<'g> {
    base: &'g TemporalAcademicGraph,
    horizon: Year,
}

impl<'g> GraphView<'g> {
    pub fn graph(&self) -> &'g TemporalAcademicGraph {
        self.base
    }

    pub fn horizon(&self) -> Year {
        self.horizon
    }

    #[inline]
    pub fn has_paper(&self, paper: PaperId) -> bool {
        self.base
            .paper_years
            .get(paper.idx())
            .is_some_and(|&y| y <= self.horizon)
    }

    pub fn contains(&self, node: NodeRef) -> bool {
        match node {
            NodeRef::Author(a) => a.idx() < self.base.n_authors,
            NodeRef::Paper(p) => self.has_paper(p),
            NodeRef::Topic(t) => t.idx() < self.base.n_topics,
        }
    }

    pub fn papers(&self) -> impl Iterator<Item = PaperId> + '_ {
        self.base.papers().filter(|&p| self.has_paper(p))
    }

    pub fn writes_edges(&self) -> impl Iterator<Item = (AuthorId, PaperId)> + '_ {
        self.base
            .writes
            .iter()
            .copied()
            .filter(|&(_, p)| self.has_paper(p))
    }

    pub fn cites_edges(&self) -> impl Iterator<Item = (PaperId, PaperId)> + '_ {
        // citing year >= cited year, so the citing paper decides membership
        self.base
            .cites
            .iter()
            .copied()
            .filter(|&(c, _)| self.has_paper(c))
    }

    pub fn about_edges(&self) -> impl Iterator<Item = (PaperId, TopicId)> + '_ {
        self.base
            .about
            .iter()
            .copied()
            .filter(|&(p, _)| self.has_paper(p))
    }

    pub fn papers_of(&self, author: AuthorId) -> impl Iterator<Item = PaperId> + '_ {
        self.base
            .papers_of(author)
            .iter()
            .copied()
            .filter(|&p| self.has_paper(p))
    }

    pub fn authors_of(&self, paper: PaperId) -> &'g [AuthorId] {
        if self.has_paper(paper) {
            self.base.authors_of(paper)
        } else {
            &[]
        }
    }

    pub fn topics_of(&self, paper: PaperId) -> &'g [TopicId] {
        if self.has_paper(paper) {
            self.base.topics_of(paper)
        } else {
            &[]
        }
    }

    /// Authors sharing at least one in-view paper with `author`.
    pub fn coauthors(&self, author: AuthorId) -> Result<BTreeSet<AuthorId>> {
        self.base.check_author(author)?;
        Ok(self
            .papers_of(author)
            .flat_map(|p| self.base.authors_of(p).iter().copied())
            .filter(|&b| b != author)
            .collect())
    }

    /// Number of in-view citations pointing at `paper`.
    pub fn paper_popularity(&self, paper: PaperId) -> Result<usize> {
        if !self.has_paper(paper) {
            return Err(Error::Lookup {
                kind: "paper",
                id: paper.0 as u64,
            });
        }
        Ok(self.base.cited_by[paper.idx()]
            .iter()
            .filter(|&&c| self.has_paper(c))
            .count())
    }

    /// Undirected in-view neighbours of a node, in ascending [`NodeRef`] order.
    pub fn neighbors(&self, node: NodeRef) -> Vec<NodeRef> {
        let mut out = Vec::new();
        match node {
            NodeRef::Author(a) => {
                out.extend(self.papers_of(a).map(NodeRef::Paper));
            }
            NodeRef::Paper(p) => {
                if !self.has_paper(p) {
                    return out;
                }
                out.extend(self.base.authors_of(p).iter().map(|&a| NodeRef::Author(a)));
                out.extend(
                    self.base.cites_out[p.idx()]
                        .iter()
                        .chain(self.base.cited_by[p.idx()].iter())
                        .filter(|&&q| self.has_paper(q))
                        .map(|&q| NodeRef::Paper(q)),
                );
                out.extend(self.base.topics_of(p).iter().map(|&t| NodeRef::Topic(t)));
            }
            NodeRef::Topic(t) => {
                out.extend(
                    self.base.papers_of_topic[t.idx()]
                        .iter()
                        .filter(|&&p| self.has_paper(p))
                        .map(|&p| NodeRef::Paper(p)),
                );
            }
        }
        out.sort_unstable();
        out.dedup();
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn three_year_graph() -> TemporalAcademicGraph {
        let mut b = GraphBuilder::new();
        b.author(0).author(1).author(2).topic(0);
        b.paper(0, 2018).paper(1, 2019).paper(2, 2020);
        b.writes(0, 0).writes(1, 0).writes(1, 1).writes(2, 2);
        b.cites(1, 0).cites(2, 0).cites(2, 1);
        b.about(0, 0).about(1, 0).about(2, 0);
        b.build().unwrap()
    }

    #[test]
    fn snapshot_filters_by_year() {
        let g = three_year_graph();
        let v = g.snapshot(2019).unwrap();
        let papers: Vec<_> = v.papers().collect();
        assert_eq!(papers, vec![PaperId(0), PaperId(1)]);
        assert_eq!(v.cites_edges().count(), 1);
        assert_eq!(v.about_edges().count(), 2);
    }

    #[test]
    fn snapshot_at_max_is_full_graph() {
        let g = three_year_graph();
        let v = g.snapshot(2020).unwrap();
        assert_eq!(v.papers().count(), g.n_papers());
        assert_eq!(v.writes_edges().count(), g.writes_edges().len());
        assert_eq!(v.cites_edges().count(), g.cites_edges().len());
        assert_eq!(v.about_edges().count(), g.about_edges().len());
    }

    #[test]
    fn snapshot_out_of_range() {
        let g = three_year_graph();
        assert!(matches!(g.snapshot(2017), Err(Error::Range { .. })));
        assert!(matches!(g.snapshot(2021), Err(Error::Range { .. })));
        assert!(TemporalAcademicGraph::empty().snapshot(2020).is_err());
    }

    #[test]
    fn coauthors_basic() {
        let g = three_year_graph();
        let v = g.snapshot(2020).unwrap();
        assert_eq!(
            v.coauthors(AuthorId(0)).unwrap().into_iter().collect::<Vec<_>>(),
            vec![AuthorId(1)]
        );
        assert!(v.coauthors(AuthorId(2)).unwrap().is_empty());
        assert!(matches!(
            v.coauthors(AuthorId(9)),
            Err(Error::Lookup { kind: "author", .. })
        ));
    }

    #[test]
    fn author_without_papers_has_no_coauthors() {
        let mut b = GraphBuilder::new();
        b.author(0).author(1).paper(0, 2000).writes(1, 0);
        let g = b.build().unwrap();
        assert!(g
            .snapshot(2000)
            .unwrap()
            .coauthors(AuthorId(0))
            .unwrap()
            .is_empty());
    }

    #[test]
    fn popularity_counts_in_view_citations() {
        let g = three_year_graph();
        assert_eq!(g.snapshot(2019).unwrap().paper_popularity(PaperId(0)).unwrap(), 1);
        assert_eq!(g.snapshot(2020).unwrap().paper_popularity(PaperId(0)).unwrap(), 2);
        assert_eq!(g.snapshot(2020).unwrap().paper_popularity(PaperId(2)).unwrap(), 0);
        assert!(g.snapshot(2019).unwrap().paper_popularity(PaperId(2)).is_err());
    }

    #[test]
    fn popularity_three_citers() {
        let mut b = GraphBuilder::new();
        for p in 0..4 {
            b.paper(p, 2000);
        }
        b.cites(1, 0).cites(2, 0).cites(3, 0);
        let g = b.build().unwrap();
        assert_eq!(g.snapshot(2000).unwrap().paper_popularity(PaperId(0)).unwrap(), 3);
    }

    #[test]
    fn active_authors_exact_year() {
        let g = three_year_graph();
        let active = g.active_authors(2020);
        assert!(active.contains(&AuthorId(2)));
        assert!(!active.contains(&AuthorId(1)));
        assert!(g.active_authors(1990).is_empty());
    }

    #[test]
    fn builder_rejects_invalid() {
        let mut b = GraphBuilder::new();
        b.paper(0, 2000).paper(1, 2001).cites(0, 1);
        assert!(matches!(b.build(), Err(Error::Integrity(_))));

        let mut b = GraphBuilder::new();
        b.author(0).paper(0, 2000).writes(0, 0).writes(0, 0);
        assert!(matches!(b.build(), Err(Error::Integrity(_))));

        let mut b = GraphBuilder::new();
        b.author(0).author(2);
        assert!(matches!(b.build(), Err(Error::Integrity(_))));

        let mut b = GraphBuilder::new();
        b.author(0).writes(0, 3);
        let err = b.build().unwrap_err().to_string();
        assert!(err.contains("paper 3"), "{err}");
    }

    #[test]
    fn neighbors_are_sorted_and_bounded() {
        let g = three_year_graph();
        let v = g.snapshot(2019).unwrap();
        assert_eq!(
            v.neighbors(NodeRef::Paper(PaperId(0))),
            vec![
                NodeRef::Author(AuthorId(0)),
                NodeRef::Author(AuthorId(1)),
                NodeRef::Paper(PaperId(1)),
                NodeRef::Topic(TopicId(0)),
            ]
        );
        assert_eq!(
            v.neighbors(NodeRef::Topic(TopicId(0))),
            vec![NodeRef::Paper(PaperId(0)), NodeRef::Paper(PaperId(1))]
        );
    }
}
