//! Synthetic temporal co-authorship graphs.
//!
//! Each simulated year a cohort of authors arrives and a fixed number of
//! papers is written. Teams grow around a lead author by mixing prior
//! collaborators, newcomers and same-topic peers. Every paper has one topic
//! and cites earlier papers with probability proportional to
//! `(1 + citations)^exponent`.

use std::collections::BTreeSet;

use rand::seq::IndexedRandom;
use rand::Rng as _;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use super::{GraphBuilder, TemporalAcademicGraph, Year};
use crate::error::{Error, Result};
use crate::rng::{rng_from, Rng};

const MEAN_CITATIONS: f64 = 3.0;
const P_PRIOR_COLLABORATOR: f64 = 0.45;
const P_NEWCOMER: f64 = 0.25;
const P_LEAD_TOPIC: f64 = 0.8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthGraphConfig {
    pub years: u32,
    pub authors_per_year: u32,
    pub papers_per_year: u32,
    pub team_size_mean: f64,
    pub topic_count: u32,
    pub citation_preferential_exponent: f64,
    pub rng_seed: u64,
    #[serde(default = "default_first_year")]
    pub first_year: Year,
}

fn default_first_year() -> Year {
    2015
}

impl Default for SynthGraphConfig {
    fn default() -> Self {
        Self {
            years: 4,
            authors_per_year: 20,
            papers_per_year: 30,
            team_size_mean: 3.0,
            topic_count: 5,
            citation_preferential_exponent: 1.0,
            rng_seed: 42,
            first_year: default_first_year(),
        }
    }
}

impl SynthGraphConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.team_size_mean > 0.0 && self.team_size_mean.is_finite()) {
            return Err(Error::Config("team_size_mean must be > 0".into()));
        }
        if !(self.citation_preferential_exponent >= 0.0
            && self.citation_preferential_exponent.is_finite())
        {
            return Err(Error::Config(
                "citation_preferential_exponent must be >= 0".into(),
            ));
        }
        if self.papers_per_year > 0 && self.years > 0 {
            if self.authors_per_year == 0 {
                return Err(Error::Config(
                    "papers_per_year > 0 requires authors_per_year > 0".into(),
                ));
            }
            if self.topic_count == 0 {
                return Err(Error::Config(
                    "papers_per_year > 0 requires topic_count > 0".into(),
                ));
            }
        }
        Ok(())
    }
}

pub fn generate_synthetic_graph(config: &SynthGraphConfig) -> Result<TemporalAcademicGraph> {
    config.validate()?;
    let mut rng = rng_from(config.rng_seed, &[0x6772_6170]);
    let mut b = GraphBuilder::new();
    for t in 0..config.topic_count {
        b.topic(t);
    }

    let mut preferred_topic: Vec<u32> = Vec::new();
    let mut collaborators: Vec<BTreeSet<u32>> = Vec::new();
    let mut by_topic: Vec<Vec<u32>> = vec![Vec::new(); config.topic_count as usize];
    let mut citations: Vec<u32> = Vec::new();
    let team_extra = (config.team_size_mean > 1.0)
        .then(|| Poisson::new(config.team_size_mean - 1.0).expect("positive rate"));
    let cite_count = Poisson::new(MEAN_CITATIONS).expect("positive rate");

    for t in 0..config.years {
        let year = config.first_year + t as Year;
        let cohort_start = preferred_topic.len() as u32;
        for _ in 0..config.authors_per_year {
            let id = preferred_topic.len() as u32;
            let topic = if config.topic_count > 0 {
                rng.random_range(0..config.topic_count)
            } else {
                0
            };
            b.author(id);
            preferred_topic.push(topic);
            collaborators.push(BTreeSet::new());
            if let Some(list) = by_topic.get_mut(topic as usize) {
                list.push(id);
            }
        }
        let n_authors = preferred_topic.len() as u32;
        let cohort: Vec<u32> = (cohort_start..n_authors).collect();

        for _ in 0..config.papers_per_year {
            let paper = citations.len() as u32;
            let lead = rng.random_range(0..n_authors);
            let topic = if rng.random::<f64>() < P_LEAD_TOPIC {
                preferred_topic[lead as usize]
            } else {
                rng.random_range(0..config.topic_count)
            };
            let size = match &team_extra {
                Some(d) => 1 + d.sample(&mut rng) as u32,
                None => 1,
            }
            .min(n_authors);

            let mut team = vec![lead];
            let mut attempts = 0;
            while (team.len() as u32) < size && attempts < 50 {
                attempts += 1;
                let pick = pick_member(
                    &mut rng,
                    &team,
                    &collaborators,
                    &cohort,
                    &by_topic[topic as usize],
                    n_authors,
                );
                if !team.contains(&pick) {
                    team.push(pick);
                }
            }

            b.paper(paper, year);
            b.about(paper, topic);
            for &a in &team {
                b.writes(a, paper);
            }
            for &a in &team {
                for &c in &team {
                    if a != c {
                        collaborators[a as usize].insert(c);
                    }
                }
            }

            let available = citations.len();
            let k = (cite_count.sample(&mut rng) as usize).min(available);
            for cited in weighted_without_replacement(
                &mut rng,
                &citations,
                k,
                config.citation_preferential_exponent,
            ) {
                b.cites(paper, cited as u32);
                citations[cited] += 1;
            }
            citations.push(0);
        }
    }
    b.build()
}

fn pick_member(
    rng: &mut Rng,
    team: &[u32],
    collaborators: &[BTreeSet<u32>],
    cohort: &[u32],
    same_topic: &[u32],
    n_authors: u32,
) -> u32 {
    let u: f64 = rng.random();
    if u < P_PRIOR_COLLABORATOR {
        let pool: Vec<u32> = team
            .iter()
            .flat_map(|&m| collaborators[m as usize].iter().copied())
            .filter(|c| !team.contains(c))
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        if let Some(&c) = pool.choose(rng) {
            return c;
        }
    } else if u < P_PRIOR_COLLABORATOR + P_NEWCOMER {
        if let Some(&c) = cohort.choose(rng) {
            return c;
        }
    } else if let Some(&c) = same_topic.choose(rng) {
        return c;
    }
    rng.random_range(0..n_authors)
}

/// Draws `k` distinct indices with probability proportional to
/// `(1 + counts[i])^exponent`, sequentially without replacement.
fn weighted_without_replacement(
    rng: &mut Rng,
    counts: &[u32],
    k: usize,
    exponent: f64,
) -> Vec<usize> {
    let mut weights: Vec<f64> = counts
        .iter()
        .map(|&c| (1.0 + c as f64).powf(exponent))
        .collect();
    let mut total: f64 = weights.iter().sum();
    let mut out = Vec::with_capacity(k);
    for _ in 0..k {
        if total <= 0.0 {
            break;
        }
        let mut x = rng.random::<f64>() * total;
        let mut chosen = weights.len() - 1;
        for (i, &w) in weights.iter().enumerate() {
            if w > 0.0 {
                if x < w {
                    chosen = i;
                    break;
                }
                x -= w;
                chosen = i;
            }
        }
        out.push(chosen);
        total -= weights[chosen];
        weights[chosen] = 0.0;
        // guard against drift
        if out.len() % 64 == 0 {
            total = weights.iter().sum();
        }
    }
    out
}
