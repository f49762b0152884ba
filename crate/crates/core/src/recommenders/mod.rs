//! Infosphere construction: what each candidate recommender exposes to an
//! author at a given horizon year.

mod lightgcn;
mod popularity;
mod predictive;

use std::collections::{BTreeMap, HashMap};
use std::fmt::{self, Write as _};
use std::str::FromStr;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{AuthorId, NodeRef, TemporalAcademicGraph, Year};
use crate::rng::{rng_from, str_tag};

pub use lightgcn::{
    lightgcn_recommend, lightgcn_train, propagate, BipartiteAdjacency, CfEmbeddings,
};
pub use popularity::{top_paper_infosphere, top_paper_topic_infosphere};
pub use predictive::{hindsight_targets, predictive_infosphere};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecommenderKind {
    Null,
    TopPaper,
    TopPaperTopic,
    Predictive,
    Lightgcn,
}

impl RecommenderKind {
    pub const ALL: [RecommenderKind; 5] = [
        RecommenderKind::Null,
        RecommenderKind::TopPaper,
        RecommenderKind::TopPaperTopic,
        RecommenderKind::Predictive,
        RecommenderKind::Lightgcn,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RecommenderKind::Null => "null",
            RecommenderKind::TopPaper => "top_paper",
            RecommenderKind::TopPaperTopic => "top_paper_topic",
            RecommenderKind::Predictive => "predictive",
            RecommenderKind::Lightgcn => "lightgcn",
        }
    }
}

impl fmt::Display for RecommenderKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RecommenderKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        RecommenderKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown recommender kind `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LightGcnConfig {
    pub embedding_dim: usize,
    pub layers: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub negatives_per_positive: usize,
}

impl Default for LightGcnConfig {
    fn default() -> Self {
        Self {
            embedding_dim: 16,
            layers: 2,
            epochs: 100,
            learning_rate: 0.05,
            negatives_per_positive: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RecommenderConfig {
    pub kind: RecommenderKind,
    pub top_n: usize,
    pub noise_branch_prob: f64,
    pub noise_branch_max: usize,
    pub lightgcn: LightGcnConfig,
    pub rng_seed: u64,
}

impl Default for RecommenderConfig {
    fn default() -> Self {
        Self {
            kind: RecommenderKind::Null,
            top_n: 10,
            noise_branch_prob: 0.1,
            noise_branch_max: 2,
            lightgcn: LightGcnConfig::default(),
            rng_seed: 0,
        }
    }
}

impl RecommenderConfig {
    pub fn of_kind(kind: RecommenderKind) -> Self {
        Self {
            kind,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.noise_branch_prob) {
            return Err(Error::Config(format!(
                "noise_branch_prob must be in [0, 1], got {}",
                self.noise_branch_prob
            )));
        }
        if self.kind == RecommenderKind::Lightgcn {
            let l = &self.lightgcn;
            if l.layers < 1 || l.embedding_dim < 1 {
                return Err(Error::Config("lightgcn needs layers >= 1 and embedding_dim >= 1".into()));
            }
            if !(l.learning_rate > 0.0) {
                return Err(Error::Config("lightgcn learning_rate must be > 0".into()));
            }
        }
        Ok(())
    }
}

/// Recommendations for one author at one horizon year, ordered by
/// descending score with ascending node order breaking ties.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Infosphere {
    pub author: AuthorId,
    pub year: Year,
    pub elements: Vec<(NodeRef, f64)>,
}

impl Infosphere {
    pub fn empty(author: AuthorId, year: Year) -> Self {
        Self {
            author,
            year,
            elements: Vec::new(),
        }
    }

    /// Sorts and de-duplicates (keeping each node's highest score).
    pub fn from_scored(author: AuthorId, year: Year, mut scored: Vec<(NodeRef, f64)>) -> Self {
        scored.sort_by(|a, b| a.0.cmp(&b.0).then(b.1.total_cmp(&a.1)));
        scored.dedup_by(|later, earlier| later.0 == earlier.0);
        sort_ranked(&mut scored);
        Self {
            author,
            year,
            elements: scored,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeRef> + '_ {
        self.elements.iter().map(|e| e.0)
    }

    pub fn is_ordered(&self) -> bool {
        self.elements.windows(2).all(|w| {
            w[0].1 > w[1].1 || (w[0].1 == w[1].1 && w[0].0 < w[1].0)
        })
    }
}

/// Descending score, ascending node on ties.
pub(crate) fn sort_ranked(items: &mut [(NodeRef, f64)]) {
    items.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
}

/// A recommender bound to a graph and horizon year. LightGCN embeddings are
/// trained once here and shared by every author.
pub struct PreparedRecommender<'g> {
    config: RecommenderConfig,
    graph: &'g TemporalAcademicGraph,
    year: Year,
    shared: Shared,
}

enum Shared {
    None,
    TopPapers(Vec<(NodeRef, f64)>),
    Cf(Box<CfEmbeddings>),
}

impl<'g> PreparedRecommender<'g> {
    pub fn new(config: &RecommenderConfig, graph: &'g TemporalAcademicGraph, year: Year) -> Result<Self> {
        config.validate()?;
        let view = graph.snapshot(year)?;
        let shared = match config.kind {
            RecommenderKind::Null | RecommenderKind::TopPaperTopic => Shared::None,
            RecommenderKind::TopPaper => Shared::TopPapers(top_paper_infosphere(&view, config.top_n)),
            RecommenderKind::Predictive => {
                if !graph.has_year(year + 1) {
                    return Err(Error::HindsightUnavailable(year + 1));
                }
                Shared::None
            }
            RecommenderKind::Lightgcn => {
                let mut rng = rng_from(config.rng_seed, &[str_tag("lightgcn"), year as u64]);
                Shared::Cf(Box::new(lightgcn_train(&view, &config.lightgcn, &mut rng)?))
            }
        };
        Ok(Self {
            config: config.clone(),
            graph,
            year,
            shared,
        })
    }

    pub fn config(&self) -> &RecommenderConfig {
        &self.config
    }

    pub fn year(&self) -> Year {
        self.year
    }

    pub fn cf_embeddings(&self) -> Option<&CfEmbeddings> {
        match &self.shared {
            Shared::Cf(e) => Some(e),
            _ => None,
        }
    }

    pub fn infosphere(&self, author: AuthorId) -> Result<Infosphere> {
        self.graph.check_author(author)?;
        let view = self.graph.snapshot(self.year)?;
        let elements = match (&self.shared, self.config.kind) {
            (_, RecommenderKind::Null) => Vec::new(),
            (Shared::TopPapers(list), _) => list.clone(),
            (_, RecommenderKind::TopPaperTopic) => {
                top_paper_topic_infosphere(&view, author, self.config.top_n)?
            }
            (_, RecommenderKind::Predictive) => {
                let mut rng = rng_from(
                    self.config.rng_seed,
                    &[str_tag("predictive"), self.year as u64, author.0 as u64],
                );
                predictive_infosphere(
                    self.graph,
                    self.year,
                    author,
                    self.config.noise_branch_prob,
                    self.config.noise_branch_max,
                    &mut rng,
                )?
            }
            (Shared::Cf(emb), _) => lightgcn_recommend(emb, &view, author, self.config.top_n)?,
            _ => unreachable!("shared state matches kind"),
        };
        Ok(Infosphere {
            author,
            year: self.year,
            elements,
        })
    }
}

/// One-shot infosphere for a single author.
pub fn recommend(
    config: &RecommenderConfig,
    graph: &TemporalAcademicGraph,
    year: Year,
    author: AuthorId,
) -> Result<Infosphere> {
    graph.check_author(author)?;
    PreparedRecommender::new(config, graph, year)?.infosphere(author)
}

/// Infospheres of every author in the graph, indexed by author id.
#[derive(Debug, Clone, PartialEq)]
pub struct InfosphereSet {
    pub kind: RecommenderKind,
    pub year: Year,
    pub by_author: Vec<Infosphere>,
}

impl InfosphereSet {
    pub fn build(config: &RecommenderConfig, graph: &TemporalAcademicGraph, year: Year) -> Result<Self> {
        let prepared = PreparedRecommender::new(config, graph, year)?;
        let by_author = graph
            .authors()
            .map(|a| prepared.infosphere(a))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            kind: config.kind,
            year,
            by_author,
        })
    }

    pub fn get(&self, author: AuthorId) -> &Infosphere {
        &self.by_author[author.idx()]
    }
}

/// Text dump: `<author> <year> <element-class> <element-id> <score>` per line.
pub fn write_infospheres<'a>(spheres: impl IntoIterator<Item = &'a Infosphere>) -> String {
    let mut out = String::new();
    for s in spheres {
        for (node, score) in &s.elements {
            let _ = writeln!(
                out,
                "{} {} {} {} {}",
                s.author,
                s.year,
                node.class_name(),
                node.raw_id(),
                score
            );
        }
    }
    out
}

pub fn parse_infospheres(text: &str) -> Result<Vec<Infosphere>> {
    let mut grouped: BTreeMap<(u32, Year), Vec<(NodeRef, f64)>> = BTreeMap::new();
    let mut order: HashMap<(u32, Year), usize> = HashMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parse_err = |m: &str| Error::Parse {
            line: i + 1,
            message: m.to_owned(),
        };
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 5 {
            return Err(parse_err("expected 5 fields"));
        }
        let author: u32 = f[0].parse().map_err(|_| parse_err("bad author id"))?;
        let year: Year = f[1].parse().map_err(|_| parse_err("bad year"))?;
        let id: u32 = f[3].parse().map_err(|_| parse_err("bad element id"))?;
        let node = NodeRef::parse(f[2], id).ok_or_else(|| parse_err("bad element class"))?;
        let score: f64 = f[4].parse().map_err(|_| parse_err("bad score"))?;
        let n = order.len();
        order.entry((author, year)).or_insert(n);
        grouped.entry((author, year)).or_default().push((node, score));
    }
    let mut out: Vec<(usize, Infosphere)> = grouped
        .into_iter()
        .map(|((a, y), elements)| {
            (
                order[&(a, y)],
                Infosphere {
                    author: AuthorId(a),
                    year: y,
                    elements,
                },
            )
        })
        .collect();
    out.sort_by_key(|(i, _)| *i);
    Ok(out.into_iter().map(|(_, s)| s).collect())
}

/// Random in-view neighbour draws shared by the noise-branch logic.
pub(crate) fn sample_distinct<T: Copy>(rng: &mut crate::rng::Rng, pool: &[T], k: usize) -> Vec<T> {
    let k = k.min(pool.len());
    rand::seq::index::sample(rng, pool.len(), k)
        .into_iter()
        .map(|i| pool[i])
        .collect()
}

pub(crate) fn coin(rng: &mut crate::rng::Rng, p: f64) -> bool {
    p > 0.0 && rng.random::<f64>() < p
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{generate_synthetic_graph, PaperId, SynthGraphConfig};

    fn fixture() -> TemporalAcademicGraph {
        generate_synthetic_graph(&SynthGraphConfig {
            years: 4,
            authors_per_year: 12,
            papers_per_year: 20,
            ..SynthGraphConfig::default()
        })
        .unwrap()
    }

    #[test]
    fn null_is_empty_for_everyone() {
        let g = fixture();
        let set = InfosphereSet::build(&RecommenderConfig::of_kind(RecommenderKind::Null), &g, 2017).unwrap();
        assert!(set.by_author.iter().all(Infosphere::is_empty));
    }

    #[test]
    fn every_kind_is_deterministic_and_ordered() {
        let g = fixture();
        for kind in RecommenderKind::ALL {
            let cfg = RecommenderConfig {
                rng_seed: 5,
                noise_branch_prob: 0.5,
                lightgcn: LightGcnConfig {
                    epochs: 10,
                    ..LightGcnConfig::default()
                },
                ..RecommenderConfig::of_kind(kind)
            };
            let a = InfosphereSet::build(&cfg, &g, 2017).unwrap();
            let b = InfosphereSet::build(&cfg, &g, 2017).unwrap();
            assert_eq!(a, b, "{kind}");
            let view = g.snapshot(2017).unwrap();
            for s in &a.by_author {
                assert!(s.is_ordered(), "{kind}: {:?}", s.elements);
                assert!(s.nodes().all(|n| view.contains(n)), "{kind}");
                let mut nodes: Vec<_> = s.nodes().collect();
                nodes.sort();
                nodes.dedup();
                assert_eq!(nodes.len(), s.len());
            }
        }
    }

    #[test]
    fn unknown_author_is_lookup_error() {
        let g = fixture();
        let err = recommend(&RecommenderConfig::default(), &g, 2017, AuthorId(10_000)).unwrap_err();
        assert!(matches!(err, Error::Lookup { kind: "author", .. }));
    }

    #[test]
    fn predictive_without_next_year_fails() {
        let g = fixture();
        let cfg = RecommenderConfig::of_kind(RecommenderKind::Predictive);
        assert!(matches!(
            recommend(&cfg, &g, 2018, AuthorId(0)),
            Err(Error::HindsightUnavailable(2019))
        ));
    }

    #[test]
    fn top_paper_is_author_independent() {
        let g = fixture();
        let set = InfosphereSet::build(&RecommenderConfig::of_kind(RecommenderKind::TopPaper), &g, 2017).unwrap();
        let first = &set.by_author[0].elements;
        assert!(!first.is_empty());
        assert!(set.by_author.iter().all(|s| &s.elements == first));
    }

    #[test]
    fn from_scored_dedups_and_orders() {
        let s = Infosphere::from_scored(
            AuthorId(0),
            2000,
            vec![
                (NodeRef::Paper(PaperId(2)), 1.0),
                (NodeRef::Paper(PaperId(1)), 1.0),
                (NodeRef::Paper(PaperId(2)), 3.0),
                (NodeRef::Author(AuthorId(4)), 0.0),
            ],
        );
        assert_eq!(
            s.elements,
            vec![
                (NodeRef::Paper(PaperId(2)), 3.0),
                (NodeRef::Paper(PaperId(1)), 1.0),
                (NodeRef::Author(AuthorId(4)), 0.0),
            ]
        );
    }

    #[test]
    fn dump_round_trip() {
        let g = fixture();
        let set = InfosphereSet::build(&RecommenderConfig::of_kind(RecommenderKind::TopPaperTopic), &g, 2017).unwrap();
        let text = write_infospheres(&set.by_author);
        let back = parse_infospheres(&text).unwrap();
        let non_empty: Vec<_> = set.by_author.iter().filter(|s| !s.is_empty()).cloned().collect();
        assert_eq!(back, non_empty);
    }

    #[test]
    fn kind_names_round_trip() {
        for k in RecommenderKind::ALL {
            assert_eq!(k.as_str().parse::<RecommenderKind>().unwrap(), k);
        }
        assert!("random".parse::<RecommenderKind>().is_err());
    }
}
