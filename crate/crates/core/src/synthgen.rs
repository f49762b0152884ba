//! Synthetic interaction datasets: run a trained user model under a known
//! recommender and record whom each author would pick as a new co-author.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{AuthorId, NodeRef, TemporalAcademicGraph, Year};
use crate::model::{extract_real_dataset, InteractionDataset, Provenance, Scorer, TrainedUserModel};
use crate::numerics::CountPrediction;
use crate::recommenders::{Infosphere, InfosphereSet, RecommenderConfig};
use crate::rng::{derive_seed, rng_from, str_tag, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionMode {
    DeterministicTopM,
    Bernoulli,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Symmetrize {
    Union,
    Intersection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthGenConfig {
    pub candidate_pool_size: usize,
    pub selection_mode: SelectionMode,
    pub use_true_counts: bool,
    pub symmetrize: Symmetrize,
    pub rng_seed: u64,
}

impl Default for SynthGenConfig {
    fn default() -> Self {
        Self {
            candidate_pool_size: 20,
            selection_mode: SelectionMode::DeterministicTopM,
            use_true_counts: false,
            symmetrize: Symmetrize::Union,
            rng_seed: 0,
        }
    }
}

impl SynthGenConfig {
    pub fn validate(&self) -> Result<()> {
        if self.candidate_pool_size == 0 {
            return Err(Error::Config("synth.candidate_pool_size must be at least 1".into()));
        }
        Ok(())
    }
}

/// Everything needed to regenerate a synthetic dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorRecord {
    /// Hex fingerprint of the generating model's checkpoint.
    pub rnu_checkpoint: String,
    pub recommender: RecommenderConfig,
    pub synth: SynthGenConfig,
    /// Horizon year the generator looked at.
    pub year: Year,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    pub dataset: InteractionDataset,
    pub generator: Option<GeneratorRecord>,
}

/// `round_half_up(μ + r)`, never negative.
pub fn max_coauthors(pred: CountPrediction) -> u64 {
    let x = pred.mu + pred.dispersion;
    if x.is_finite() && x > 0.0 {
        (x + 0.5).floor() as u64
    } else {
        0
    }
}

/// Potential new partners, in priority order: authors in the infosphere,
/// authors of infosphere papers, 2-hop co-authors, then random authors active
/// next year (or this year when next year is absent). Existing co-authors and
/// the author are never included.
pub fn candidate_partners(
    graph: &TemporalAcademicGraph,
    year: Year,
    author: AuthorId,
    infosphere: &Infosphere,
    pool_size: usize,
    rng: &mut Rng,
) -> Result<Vec<AuthorId>> {
    let view = graph.snapshot(year)?;
    let existing = view.coauthors(author)?;
    let mut seen: BTreeSet<AuthorId> = existing.clone();
    seen.insert(author);
    let mut out = Vec::with_capacity(pool_size);
    let mut push = |b: AuthorId, out: &mut Vec<AuthorId>| {
        if out.len() < pool_size && seen.insert(b) {
            out.push(b);
        }
    };

    for n in infosphere.nodes() {
        if let NodeRef::Author(b) = n {
            push(b, &mut out);
        }
    }
    for n in infosphere.nodes() {
        if let NodeRef::Paper(p) = n {
            let mut authors = view.authors_of(p).to_vec();
            authors.sort_unstable();
            for b in authors {
                push(b, &mut out);
            }
        }
    }
    let mut two_hop = BTreeSet::new();
    for &c in &existing {
        two_hop.extend(view.coauthors(c)?);
    }
    for b in two_hop {
        push(b, &mut out);
    }
    if out.len() < pool_size {
        let source_year = if graph.has_year(year + 1) { year + 1 } else { year };
        let mut pool: Vec<AuthorId> = graph.active_authors(source_year).into_iter().collect();
        // Partial Fisher-Yates: uniform order without replacement.
        let mut i = 0;
        while i < pool.len() && out.len() < pool_size {
            let j = rng.random_range(i..pool.len());
            pool.swap(i, j);
            push(pool[i], &mut out);
            i += 1;
        }
    }
    Ok(out)
}

fn select(
    mode: SelectionMode,
    candidates: &[AuthorId],
    probs: &[f64],
    m: usize,
    rng: &mut Rng,
) -> Vec<AuthorId> {
    let m = m.min(candidates.len());
    match mode {
        SelectionMode::DeterministicTopM => {
            let mut order: Vec<usize> = (0..candidates.len()).collect();
            order.sort_by(|&i, &j| probs[j].total_cmp(&probs[i]).then(i.cmp(&j)));
            order.into_iter().take(m).map(|i| candidates[i]).collect()
        }
        SelectionMode::Bernoulli => {
            let mut weights = probs.to_vec();
            let mut picked = Vec::with_capacity(m);
            for _ in 0..m {
                let total: f64 = weights.iter().sum();
                if total <= 0.0 {
                    break;
                }
                let mut x = rng.random::<f64>() * total;
                let mut k = weights.iter().rposition(|&w| w > 0.0).expect("positive total");
                for (i, &w) in weights.iter().enumerate() {
                    if w > 0.0 && x < w {
                        k = i;
                        break;
                    }
                    x -= w;
                }
                picked.push(candidates[k]);
                weights[k] = 0.0;
            }
            picked
        }
    }
}

/// Synthetic ground truth for `year + 1` under `recommender`.
pub fn generate_rhsd(
    rnu: &TrainedUserModel,
    graph: &TemporalAcademicGraph,
    year: Year,
    recommender: &RecommenderConfig,
    gen_config: &SynthGenConfig,
) -> Result<SyntheticDataset> {
    let set = InfosphereSet::build(recommender, graph, year)?;
    generate_rhsd_with(rnu, graph, year, recommender, &set, gen_config)
}

/// As [`generate_rhsd`] with precomputed infospheres.
pub fn generate_rhsd_with(
    rnu: &TrainedUserModel,
    graph: &TemporalAcademicGraph,
    year: Year,
    recommender: &RecommenderConfig,
    infospheres: &InfosphereSet,
    gen_config: &SynthGenConfig,
) -> Result<SyntheticDataset> {
    gen_config.validate()?;
    rnu.check_graph(graph)?;
    if !graph.has_year(year + 1) {
        return Err(Error::HindsightUnavailable(year + 1));
    }
    if infospheres.year != year || infospheres.kind != recommender.kind {
        return Err(Error::Integrity("infospheres do not match the requested recommender/year".into()));
    }
    let view = graph.snapshot(year)?;
    let scorer = Scorer::new(rnu, &view, &infospheres.by_author)?;
    let true_counts = if gen_config.use_true_counts {
        Some(extract_real_dataset(graph, year, 0)?.count_targets)
    } else {
        None
    };
    let active: Vec<AuthorId> = graph.active_authors(year + 1).into_iter().collect();
    let tag = str_tag("synthgen");
    let selections: Vec<(AuthorId, Vec<AuthorId>)> = active
        .par_iter()
        .map(|&a| {
            let mut rng = rng_from(gen_config.rng_seed, &[tag, year as u64, a.0 as u64]);
            let m = match &true_counts {
                Some(c) => c.get(&a).copied().unwrap_or(0),
                None => max_coauthors(scorer.count_prediction(a)),
            } as usize;
            let cands =
                candidate_partners(graph, year, a, infospheres.get(a), gen_config.candidate_pool_size, &mut rng)?;
            let probs: Vec<f64> = cands.iter().map(|&b| scorer.pair_probability(a, b)).collect();
            Ok((a, select(gen_config.selection_mode, &cands, &probs, m, &mut rng)))
        })
        .collect::<Result<Vec<_>>>()?;

    let directed: BTreeSet<(AuthorId, AuthorId)> = selections
        .iter()
        .flat_map(|(a, picks)| picks.iter().map(move |&b| (*a, b)))
        .collect();
    let edges: BTreeSet<(AuthorId, AuthorId)> = directed
        .iter()
        .filter(|&&(a, b)| match gen_config.symmetrize {
            Symmetrize::Union => true,
            Symmetrize::Intersection => directed.contains(&(b, a)),
        })
        .map(|&(a, b)| (a.min(b), a.max(b)))
        .collect();
    let mut counts: BTreeMap<AuthorId, u64> = active.iter().map(|&a| (a, 0)).collect();
    for &(a, b) in &edges {
        for x in [a, b] {
            if let Some(c) = counts.get_mut(&x) {
                *c += 1;
            }
        }
    }
    let seed = derive_seed(gen_config.rng_seed, &[str_tag("dataset"), str_tag(recommender.kind.as_str())]);
    let dataset = InteractionDataset::new(
        year + 1,
        edges,
        counts,
        Provenance::Synthetic {
            recommender: recommender.kind,
        },
        seed,
    )?;
    Ok(SyntheticDataset {
        dataset,
        generator: Some(GeneratorRecord {
            rnu_checkpoint: format!("{:016x}", rnu.fingerprint()),
            recommender: recommender.clone(),
            synth: gen_config.clone(),
            year,
        }),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DatasetStats {
    pub edges: usize,
    pub authors: usize,
    pub mean_count: f64,
    pub variance_count: f64,
    /// count value → number of authors with that count
    pub histogram: BTreeMap<u64, usize>,
}

/// Exact summary; variance is the population variance.
pub fn dataset_stats(ds: &InteractionDataset) -> DatasetStats {
    let n = ds.count_targets.len();
    let mut histogram = BTreeMap::new();
    for &k in ds.count_targets.values() {
        *histogram.entry(k).or_insert(0) += 1;
    }
    let (mean, var) = if n == 0 {
        (0.0, 0.0)
    } else {
        let mean = ds.count_targets.values().map(|&k| k as f64).sum::<f64>() / n as f64;
        let var = ds.count_targets.values().map(|&k| (k as f64 - mean).powi(2)).sum::<f64>() / n as f64;
        (mean, var)
    };
    DatasetStats {
        edges: ds.positives.len(),
        authors: n,
        mean_count: mean,
        variance_count: var,
        histogram,
    }
}

#[derive(Serialize, Deserialize)]
struct DatasetHeader {
    year: Year,
    provenance: Provenance,
    seed: u64,
    generator: Option<GeneratorRecord>,
}

/// `H <json header>` followed by `E <u> <v>` and `K <author> <count>` lines.
pub fn write_dataset(ds: &SyntheticDataset) -> String {
    let header = DatasetHeader {
        year: ds.dataset.year,
        provenance: ds.dataset.provenance,
        seed: ds.dataset.seed,
        generator: ds.generator.clone(),
    };
    let mut out = String::new();
    out.push_str("# interaction dataset\n");
    writeln!(out, "H {}", serde_json::to_string(&header).expect("header serializes")).unwrap();
    for e in &ds.dataset.positives {
        writeln!(out, "E {} {}", e.u, e.v).unwrap();
    }
    for (a, k) in &ds.dataset.count_targets {
        writeln!(out, "K {a} {k}").unwrap();
    }
    out
}

pub fn parse_dataset(text: &str) -> Result<SyntheticDataset> {
    let mut header: Option<DatasetHeader> = None;
    let mut pairs = Vec::new();
    let mut counts = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |message: String| Error::Parse { line: line_no, message };
        if let Some(json) = line.strip_prefix("H ") {
            if header.is_some() {
                return Err(err("duplicate header".into()));
            }
            header = Some(serde_json::from_str(json).map_err(|e| err(format!("bad header: {e}")))?);
            continue;
        }
        if header.is_none() {
            return Err(err("record before header".into()));
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let num = |s: &str| s.parse::<u64>().map_err(|_| err(format!("invalid number `{s}`")));
        match fields.as_slice() {
            ["E", u, v] => {
                let (u, v) = (num(u)?, num(v)?);
                let id = |x: u64| u32::try_from(x).map(AuthorId).map_err(|_| err(format!("author id {x} too large")));
                pairs.push((id(u)?, id(v)?));
            }
            ["K", a, k] => {
                let a = u32::try_from(num(a)?).map_err(|_| err("author id too large".into()))?;
                if counts.insert(AuthorId(a), num(k)?).is_some() {
                    return Err(err(format!("duplicate count for author {a}")));
                }
            }
            _ => return Err(err(format!("unrecognized record `{line}`"))),
        }
    }
    let header = header.ok_or(Error::Parse {
        line: 0,
        message: "missing header".into(),
    })?;
    let dataset = InteractionDataset::new(header.year, pairs, counts, header.provenance, header.seed)?;
    Ok(SyntheticDataset {
        dataset,
        generator: header.generator,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{generate_synthetic_graph, GraphBuilder, SynthGraphConfig};
    use crate::model::{ModelConfig, train_rnu};
    use crate::recommenders::RecommenderKind;

    #[test]
    fn rounding_rule() {
        let p = |mu, r| CountPrediction { mu, dispersion: r };
        assert_eq!(max_coauthors(p(2.3, 1.2)), 4);
        assert_eq!(max_coauthors(p(0.2, 0.1)), 0);
        assert_eq!(max_coauthors(p(5.0, 2.0)), 7);
        assert_eq!(max_coauthors(p(0.25, 0.25)), 1);
    }

    fn graph() -> TemporalAcademicGraph {
        generate_synthetic_graph(&SynthGraphConfig {
            years: 5,
            authors_per_year: 10,
            papers_per_year: 25,
            rng_seed: 21,
            ..SynthGraphConfig::default()
        })
        .unwrap()
    }

    #[test]
    fn isolated_author_gets_random_active_authors() {
        let mut b = GraphBuilder::new();
        for a in 0..8 {
            b.author(a);
        }
        b.paper(0, 2000).paper(1, 2001).paper(2, 2001);
        b.writes(1, 0).writes(2, 0).writes(3, 1).writes(4, 1).writes(5, 2).writes(6, 2);
        let g = b.build().unwrap();
        let inf = Infosphere::empty(AuthorId(0), 2000);
        let c = candidate_partners(&g, 2000, AuthorId(0), &inf, 3, &mut rng_from(1, &[])).unwrap();
        assert_eq!(c.len(), 3);
        let active = g.active_authors(2001);
        assert!(c.iter().all(|a| active.contains(a)));
        let again = candidate_partners(&g, 2000, AuthorId(0), &inf, 3, &mut rng_from(1, &[])).unwrap();
        assert_eq!(c, again);
        // Tiny graph: fewer than requested.
        let all = candidate_partners(&g, 2000, AuthorId(0), &inf, 50, &mut rng_from(1, &[])).unwrap();
        assert_eq!(all.len(), active.len());
    }

    #[test]
    fn candidates_exclude_coauthors_and_follow_priority() {
        let g = graph();
        let year = 2018;
        let view = g.snapshot(year).unwrap();
        let set = InfosphereSet::build(&RecommenderConfig::of_kind(RecommenderKind::TopPaper), &g, year).unwrap();
        for a in g.authors() {
            let c = candidate_partners(&g, year, a, set.get(a), 15, &mut rng_from(2, &[a.0 as u64])).unwrap();
            let existing = view.coauthors(a).unwrap();
            assert!(c.iter().all(|b| !existing.contains(b) && *b != a));
            let unique: BTreeSet<_> = c.iter().collect();
            assert_eq!(unique.len(), c.len());
            // The first candidate, when any infosphere paper has an eligible
            // author, comes from the infosphere.
            let from_inf: BTreeSet<AuthorId> = set
                .get(a)
                .nodes()
                .filter_map(|n| match n {
                    NodeRef::Paper(p) => Some(view.authors_of(p).to_vec()),
                    _ => None,
                })
                .flatten()
                .filter(|b| !existing.contains(b) && *b != a)
                .collect();
            let k = from_inf.len().min(15);
            assert_eq!(c[..k].iter().copied().collect::<BTreeSet<_>>().len(), k);
            assert!(c[..k].iter().all(|b| from_inf.contains(b)));
        }
    }

    fn rnu(g: &TemporalAcademicGraph) -> TrainedUserModel {
        let cfg = ModelConfig {
            embedding_dim: 8,
            hidden_dim: 8,
            epochs: 4,
            batch_size: 64,
            ..ModelConfig::default()
        };
        train_rnu(g, 2018, &cfg).unwrap()
    }

    #[test]
    fn generation_invariants() {
        let g = graph();
        let model = rnu(&g);
        let year = 2018;
        let view = g.snapshot(year).unwrap();
        let cfg = SynthGenConfig::default();
        for kind in [RecommenderKind::Null, RecommenderKind::TopPaper, RecommenderKind::TopPaperTopic] {
            let r = RecommenderConfig::of_kind(kind);
            let ds = generate_rhsd(&model, &g, year, &r, &cfg).unwrap();
            let d = &ds.dataset;
            d.validate(&g).unwrap();
            assert_eq!(d.provenance, Provenance::Synthetic { recommender: kind });
            let active = g.active_authors(year + 1);
            assert_eq!(d.count_targets.keys().copied().collect::<BTreeSet<_>>(), active);

            let set = InfosphereSet::build(&r, &g, year).unwrap();
            let scorer = Scorer::new(&model, &view, &set.by_author).unwrap();
            let mut budget = 0;
            let mut cand: BTreeMap<AuthorId, Vec<AuthorId>> = BTreeMap::new();
            for &a in &active {
                budget += max_coauthors(scorer.count_prediction(a));
                let mut rng = rng_from(cfg.rng_seed, &[str_tag("synthgen"), year as u64, a.0 as u64]);
                cand.insert(a, candidate_partners(&g, year, a, set.get(a), cfg.candidate_pool_size, &mut rng).unwrap());
            }
            assert!(d.positives.len() as u64 <= budget);
            for e in &d.positives {
                let in_a = cand.get(&e.u).is_some_and(|c| c.contains(&e.v));
                let in_b = cand.get(&e.v).is_some_and(|c| c.contains(&e.u));
                assert!(in_a || in_b);
                assert!(!view.coauthors(e.u).unwrap().contains(&e.v));
            }
            // Handshake identity when every endpoint is active.
            let stats = dataset_stats(d);
            assert_eq!(stats.histogram.values().sum::<usize>(), active.len());
            let inactive_endpoints = d
                .positives
                .iter()
                .filter(|e| !active.contains(&e.u) || !active.contains(&e.v))
                .count();
            if inactive_endpoints == 0 {
                let expected = 2.0 * d.positives.len() as f64 / active.len() as f64;
                assert!((stats.mean_count - expected).abs() < 1e-12);
            }

            let text = write_dataset(&ds);
            assert_eq!(parse_dataset(&text).unwrap(), ds);
            let again = generate_rhsd(&model, &g, year, &r, &cfg).unwrap();
            assert_eq!(write_dataset(&again), text);
        }
    }

    #[test]
    fn intersection_is_subset_of_union() {
        let g = graph();
        let model = rnu(&g);
        let r = RecommenderConfig::of_kind(RecommenderKind::Null);
        let union = generate_rhsd(&model, &g, 2018, &r, &SynthGenConfig::default()).unwrap();
        let inter = generate_rhsd(
            &model,
            &g,
            2018,
            &r,
            &SynthGenConfig {
                symmetrize: Symmetrize::Intersection,
                ..SynthGenConfig::default()
            },
        )
        .unwrap();
        let u: BTreeSet<_> = union.dataset.pairs().collect();
        assert!(inter.dataset.pairs().all(|p| u.contains(&p)));
    }

    #[test]
    fn bernoulli_and_true_counts_modes() {
        let g = graph();
        let model = rnu(&g);
        let r = RecommenderConfig::of_kind(RecommenderKind::TopPaperTopic);
        let cfg = SynthGenConfig {
            selection_mode: SelectionMode::Bernoulli,
            use_true_counts: true,
            rng_seed: 3,
            ..SynthGenConfig::default()
        };
        let a = generate_rhsd(&model, &g, 2018, &r, &cfg).unwrap();
        let b = generate_rhsd(&model, &g, 2018, &r, &cfg).unwrap();
        assert_eq!(a, b);
        let truth = extract_real_dataset(&g, 2018, 0).unwrap();
        let budget: u64 = truth.count_targets.values().sum();
        assert!(a.dataset.positives.len() as u64 <= budget);
    }

    #[test]
    fn empty_stats_are_zero() {
        let ds = InteractionDataset::new(2000, [], BTreeMap::new(), Provenance::Real, 0).unwrap();
        let s = dataset_stats(&ds);
        assert_eq!((s.edges, s.authors, s.mean_count, s.variance_count), (0, 0, 0.0, 0.0));
        assert!(s.histogram.is_empty());
    }

    #[test]
    fn parse_errors_carry_lines() {
        let err = parse_dataset("E 1 2\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
        let header = r#"H {"year":2001,"provenance":{"source":"real"},"seed":0,"generator":null}"#;
        let err = parse_dataset(&format!("{header}\nE 1 x\n")).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
        let ok = parse_dataset(&format!("{header}\nE 2 1\nK 1 1\n")).unwrap();
        assert_eq!(ok.dataset.positives.len(), 1);
    }
}
