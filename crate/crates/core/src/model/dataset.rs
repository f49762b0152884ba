//! Real-data extraction, negative sampling and frozen evaluation sets.

use std::collections::{BTreeMap, HashSet};

use rand::Rng as _;

use super::{fnv64, InteractionDataset, Provenance};
use crate::error::{Error, Result};
use crate::graph::{AuthorId, GraphView, TemporalAcademicGraph, Year};
use crate::rng::{rng_from, str_tag, Rng};

/// New co-authorship pairs of `year + 1` (pairs absent from the `year`
/// snapshot), with every active author's count of new co-authors.
pub fn extract_real_dataset(graph: &TemporalAcademicGraph, year: Year, seed: u64) -> Result<InteractionDataset> {
    let next = year + 1;
    if !graph.has_year(next) {
        return Err(Error::HindsightUnavailable(next));
    }
    let view = graph.snapshot(year)?;
    let mut pairs = Vec::new();
    let mut counts = BTreeMap::new();
    for a in graph.active_authors(next) {
        let existing = view.coauthors(a)?;
        let mut fresh = std::collections::BTreeSet::new();
        for p in graph.papers_of_in_year(a, next) {
            for &b in graph.authors_of(p) {
                if b != a && !existing.contains(&b) {
                    fresh.insert(b);
                }
            }
        }
        counts.insert(a, fresh.len() as u64);
        pairs.extend(fresh.into_iter().map(|b| (a, b)));
    }
    InteractionDataset::new(next, pairs, counts, Provenance::Real, seed)
}

/// Draws corrupted pairs: one endpoint of a positive is kept and the other is
/// replaced by a uniform author, rejecting known positives and existing
/// co-authors.
pub(crate) struct NegativeSampler {
    n_authors: u32,
    forbidden: HashSet<(u32, u32)>,
}

const MAX_TRIES: usize = 64;

impl NegativeSampler {
    pub fn new(view: &GraphView<'_>, dataset: &InteractionDataset) -> Self {
        let mut forbidden = HashSet::new();
        let mut add = |a: AuthorId, b: AuthorId| {
            forbidden.insert((a.0.min(b.0), a.0.max(b.0)));
        };
        for (u, v) in dataset.pairs() {
            add(u, v);
        }
        for &(u, v) in &dataset.excluded_pairs {
            add(u, v);
        }
        for p in view.papers() {
            let authors = view.authors_of(p);
            for (i, &a) in authors.iter().enumerate() {
                for &b in &authors[i + 1..] {
                    add(a, b);
                }
            }
        }
        Self {
            n_authors: view.graph().n_authors() as u32,
            forbidden,
        }
    }

    pub fn draw(&self, u: AuthorId, v: AuthorId, rng: &mut Rng) -> Option<(AuthorId, AuthorId)> {
        if self.n_authors < 2 {
            return None;
        }
        let keep = if rng.random_bool(0.5) { u.0 } else { v.0 };
        for _ in 0..MAX_TRIES {
            let w = rng.random_range(0..self.n_authors);
            let key = (keep.min(w), keep.max(w));
            if w != keep && !self.forbidden.contains(&key) {
                return Some((AuthorId(key.0), AuthorId(key.1)));
            }
        }
        None
    }
}

/// Held-out pairs with their frozen negatives, plus held-out count targets.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalSet {
    pub year: Year,
    pub pairs: Vec<(AuthorId, AuthorId, bool)>,
    pub counts: Vec<(AuthorId, u64)>,
    pub checksum: u64,
}

impl EvalSet {
    pub fn checksum_hex(&self) -> String {
        format!("{:016x}", self.checksum)
    }
}

/// Negatives depend only on the dataset seed and each positive's endpoints,
/// so every model evaluated on `holdout` sees exactly the same examples.
pub fn build_eval_set(
    graph: &TemporalAcademicGraph,
    holdout: &InteractionDataset,
    negatives_per_positive: usize,
) -> Result<EvalSet> {
    let view = graph.snapshot(holdout.year - 1)?;
    let sampler = NegativeSampler::new(&view, holdout);
    let tag = str_tag("eval-negatives");
    let mut pairs = Vec::with_capacity(holdout.positives.len() * (1 + negatives_per_positive));
    for e in &holdout.positives {
        pairs.push((e.u, e.v, true));
        let mut rng = rng_from(holdout.seed, &[tag, e.u.0 as u64, e.v.0 as u64]);
        for _ in 0..negatives_per_positive {
            if let Some((a, b)) = sampler.draw(e.u, e.v, &mut rng) {
                pairs.push((a, b, false));
            }
        }
    }
    let counts: Vec<(AuthorId, u64)> = holdout.count_targets.iter().map(|(&a, &k)| (a, k)).collect();
    let mut bytes = Vec::with_capacity(pairs.len() * 9 + counts.len() * 12 + 4);
    bytes.extend_from_slice(&holdout.year.to_le_bytes());
    for &(a, b, l) in &pairs {
        bytes.extend_from_slice(&a.0.to_le_bytes());
        bytes.extend_from_slice(&b.0.to_le_bytes());
        bytes.push(l as u8);
    }
    for &(a, k) in &counts {
        bytes.extend_from_slice(&a.0.to_le_bytes());
        bytes.extend_from_slice(&k.to_le_bytes());
    }
    Ok(EvalSet {
        year: holdout.year,
        checksum: fnv64(&bytes),
        pairs,
        counts,
    })
}
