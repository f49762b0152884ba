//! User-behaviour model: who co-authors with whom next year, and how many new
//! co-authors each author takes on, given the graph and what a recommender
//! showed them.

mod dataset;
mod network;
mod train;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{AuthorId, GraphView, NodeRef, TemporalAcademicGraph, Year};
use crate::numerics::{sigmoid, CountPrediction, ParamStore};
use crate::recommenders::{Infosphere, RecommenderConfig, RecommenderKind};

pub use dataset::{build_eval_set, extract_real_dataset, EvalSet};
pub use network::{GraphStructure, Network, COUNT_FLOOR};
pub use train::{
    check_training_gradient, evaluate_nll, evaluate_on, evaluate_parts, train_rnu, train_rnu_marginalized,
    train_user_model, train_with_infospheres, HypothesisInputs, LossParts,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub embedding_dim: usize,
    pub mp_layers: usize,
    pub hidden_dim: usize,
    pub negatives_per_positive: usize,
    pub count_loss_weight: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub rng_seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            embedding_dim: 32,
            mp_layers: 2,
            hidden_dim: 16,
            negatives_per_positive: 5,
            count_loss_weight: 1.0,
            epochs: 30,
            batch_size: 256,
            learning_rate: 1e-2,
            rng_seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("embedding_dim", self.embedding_dim),
            ("hidden_dim", self.hidden_dim),
            ("epochs", self.epochs),
            ("batch_size", self.batch_size),
        ];
        for (name, v) in dims {
            if v == 0 {
                return Err(Error::Config(format!("model.{name} must be at least 1")));
            }
        }
        if !(self.count_loss_weight >= 0.0 && self.count_loss_weight.is_finite()) {
            return Err(Error::Config("model.count_loss_weight must be finite and >= 0".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("model.learning_rate must be positive".into()));
        }
        Ok(())
    }
}

/// Node counts a parameter store was sized for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphShape {
    pub n_authors: usize,
    pub n_papers: usize,
    pub n_topics: usize,
}

impl GraphShape {
    pub fn of(graph: &TemporalAcademicGraph) -> Self {
        Self {
            n_authors: graph.n_authors(),
            n_papers: graph.n_papers(),
            n_topics: graph.n_topics(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct InteractionExample {
    pub u: AuthorId,
    pub v: AuthorId,
    pub label: bool,
    pub year: Year,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "source")]
pub enum Provenance {
    Real,
    Synthetic { recommender: RecommenderKind },
}

/// Observed (or synthetic) outcomes for one prediction year. The model sees
/// the graph up to `year - 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionDataset {
    pub year: Year,
    /// Label-1 pairs with `u < v`, sorted and unique.
    pub positives: Vec<InteractionExample>,
    pub count_targets: BTreeMap<AuthorId, u64>,
    pub provenance: Provenance,
    /// Drives the holdout split and the frozen evaluation negatives.
    pub seed: u64,
    /// Pairs that must never be drawn as negatives (positives of a sibling
    /// split).
    pub excluded_pairs: BTreeSet<(AuthorId, AuthorId)>,
}

impl InteractionDataset {
    /// Normalizes pairs to `u < v`, sorts and deduplicates them.
    pub fn new(
        year: Year,
        pairs: impl IntoIterator<Item = (AuthorId, AuthorId)>,
        count_targets: BTreeMap<AuthorId, u64>,
        provenance: Provenance,
        seed: u64,
    ) -> Result<Self> {
        let mut set = BTreeSet::new();
        for (a, b) in pairs {
            if a == b {
                return Err(Error::Domain(format!("self-pair for author {a}")));
            }
            set.insert((a.min(b), a.max(b)));
        }
        Ok(Self {
            year,
            positives: set
                .into_iter()
                .map(|(u, v)| InteractionExample {
                    u,
                    v,
                    label: true,
                    year,
                })
                .collect(),
            count_targets,
            provenance,
            seed,
            excluded_pairs: BTreeSet::new(),
        })
    }

    pub fn is_empty(&self) -> bool {
        self.positives.is_empty() && self.count_targets.is_empty()
    }

    pub fn pairs(&self) -> impl Iterator<Item = (AuthorId, AuthorId)> + '_ {
        self.positives.iter().map(|e| (e.u, e.v))
    }

    /// Checks the dataset against the graph it claims to describe.
    pub fn validate(&self, graph: &TemporalAcademicGraph) -> Result<()> {
        for e in &self.positives {
            graph.check_author(e.u)?;
            graph.check_author(e.v)?;
            if e.u == e.v || !e.label || e.year != self.year {
                return Err(Error::Integrity(format!("malformed positive ({}, {})", e.u, e.v)));
            }
        }
        let active = graph.active_authors(self.year);
        for a in self.count_targets.keys() {
            if !active.contains(a) {
                return Err(Error::Integrity(format!(
                    "count target for author {a}, who is not active in {}",
                    self.year
                )));
            }
        }
        Ok(())
    }

    /// Deterministic split keyed on the dataset seed; returns `(train, holdout)`.
    pub fn split(&self, holdout_fraction: f64) -> Result<(Self, Self)> {
        if !(0.0..1.0).contains(&holdout_fraction) {
            return Err(Error::Config(format!("holdout fraction {holdout_fraction} outside [0, 1)")));
        }
        use crate::rng::{derive_seed, str_tag, unit_from_hash};
        let pair_tag = str_tag("holdout-pair");
        let author_tag = str_tag("holdout-author");
        let held = |path: &[u64]| unit_from_hash(derive_seed(self.seed, path)) < holdout_fraction;

        let mut excluded = self.excluded_pairs.clone();
        excluded.extend(self.pairs());
        let empty = |s: &Self| Self {
            positives: Vec::new(),
            count_targets: BTreeMap::new(),
            excluded_pairs: excluded.clone(),
            ..s.clone()
        };
        let (mut train, mut hold) = (empty(self), empty(self));
        for e in &self.positives {
            let side = if held(&[pair_tag, e.u.0 as u64, e.v.0 as u64]) { &mut hold } else { &mut train };
            side.positives.push(*e);
        }
        for (&a, &k) in &self.count_targets {
            let side = if held(&[author_tag, a.0 as u64]) { &mut hold } else { &mut train };
            side.count_targets.insert(a, k);
        }
        Ok((train, hold))
    }
}

/// A fitted model together with everything needed to reuse it.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedUserModel {
    pub params: ParamStore,
    pub config: ModelConfig,
    pub shape: GraphShape,
    /// The recommender whose infospheres were used; for marginalized training
    /// the first pool entry.
    pub recommender_used: RecommenderConfig,
    pub pool: Vec<RecommenderConfig>,
    /// How many batches used each pool entry.
    pub pool_draws: Vec<u64>,
    pub year: Year,
    pub history: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct ModelManifest {
    config: ModelConfig,
    shape: GraphShape,
    recommender_used: RecommenderConfig,
    pool: Vec<RecommenderConfig>,
    pool_draws: Vec<u64>,
    year: Year,
    history: Vec<f64>,
}

impl TrainedUserModel {
    pub fn network(&self) -> Result<Network> {
        Network::bind(self.shape, &self.config, &self.params)
    }

    pub fn check_graph(&self, graph: &TemporalAcademicGraph) -> Result<()> {
        let shape = GraphShape::of(graph);
        if shape != self.shape {
            return Err(Error::Integrity(format!(
                "model was trained on a graph with {:?}, got {:?}",
                self.shape, shape
            )));
        }
        Ok(())
    }

    pub fn checkpoint_bytes(&self) -> Vec<u8> {
        self.params.to_checkpoint()
    }

    pub fn manifest_json(&self) -> String {
        let m = ModelManifest {
            config: self.config.clone(),
            shape: self.shape,
            recommender_used: self.recommender_used.clone(),
            pool: self.pool.clone(),
            pool_draws: self.pool_draws.clone(),
            year: self.year,
            history: self.history.clone(),
        };
        serde_json::to_string_pretty(&m).expect("manifest serializes") + "\n"
    }

    pub fn from_parts(checkpoint: &[u8], manifest: &str) -> Result<Self> {
        let m: ModelManifest = serde_json::from_str(manifest)
            .map_err(|e| Error::Parse {
                line: e.line(),
                message: e.to_string(),
            })?;
        let params = ParamStore::from_checkpoint(checkpoint)?;
        Network::bind(m.shape, &m.config, &params)?;
        Ok(Self {
            params,
            config: m.config,
            shape: m.shape,
            recommender_used: m.recommender_used,
            pool: m.pool,
            pool_draws: m.pool_draws,
            year: m.year,
            history: m.history,
        })
    }

    /// Stable 64-bit fingerprint of the checkpoint bytes.
    pub fn fingerprint(&self) -> u64 {
        fnv64(&self.checkpoint_bytes())
    }
}

pub(crate) fn fnv64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn checked_input(view: &GraphView<'_>, structure: &GraphStructure, inf: &Infosphere) -> Result<Vec<(u32, f64)>> {
    if let Some(n) = inf.nodes().find(|&n| !view.contains(n)) {
        return Err(Error::Integrity(format!(
            "infosphere element {} {} is outside the view",
            n.class_name(),
            n.raw_id()
        )));
    }
    Ok(network::infosphere_weights(inf, structure))
}

fn check_in_view(view: &GraphView<'_>, author: AuthorId) -> Result<()> {
    view.graph().check_author(author)?;
    if !view.contains(NodeRef::Author(author)) {
        return Err(Error::Lookup {
            kind: "author",
            id: author.0 as u64,
        });
    }
    Ok(())
}

/// Representation of `author` after the message-passing stack, with its own
/// infosphere injected.
pub fn embed_author(
    view: &GraphView<'_>,
    infosphere: &Infosphere,
    author: AuthorId,
    params: &ParamStore,
    config: &ModelConfig,
) -> Result<Vec<f64>> {
    check_in_view(view, author)?;
    let net = Network::bind(GraphShape::of(view.graph()), config, params)?;
    let structure = GraphStructure::from_view(view);
    let input = checked_input(view, &structure, infosphere)?;
    network::embed_author(&net, params, &structure, author, &input)
}

/// Probability that `u` and `v` co-author, given each one's infosphere.
pub fn pair_probability(
    params: &ParamStore,
    config: &ModelConfig,
    view: &GraphView<'_>,
    inf_u: &Infosphere,
    inf_v: &Infosphere,
    u: AuthorId,
    v: AuthorId,
) -> Result<f64> {
    if u == v {
        return Err(Error::Domain(format!("pair probability of author {u} with itself")));
    }
    check_in_view(view, u)?;
    check_in_view(view, v)?;
    let net = Network::bind(GraphShape::of(view.graph()), config, params)?;
    let structure = GraphStructure::from_view(view);
    let base = network::base_forward(&net, params, &structure);
    let hu = network::ego_forward(&net, params, &base, u.idx(), &checked_input(view, &structure, inf_u)?);
    let hv = network::ego_forward(&net, params, &base, v.idx(), &checked_input(view, &structure, inf_v)?);
    Ok(sigmoid(network::pair_forward(&net, params, hu.output(), hv.output()).logit))
}

/// Negative-binomial parameters for `u`'s number of new co-authors.
pub fn count_prediction(
    params: &ParamStore,
    config: &ModelConfig,
    view: &GraphView<'_>,
    inf_u: &Infosphere,
    u: AuthorId,
) -> Result<CountPrediction> {
    let h = embed_author(view, inf_u, u, params, config)?;
    let net = Network::bind(GraphShape::of(view.graph()), config, params)?;
    Ok(network::count_forward(&net, params, &h).pred)
}

/// Cached forward state for scoring many pairs under one set of infospheres.
pub struct Scorer<'m> {
    net: Network,
    params: &'m ParamStore,
    reps: Vec<Vec<f64>>,
}

impl<'m> Scorer<'m> {
    /// `infospheres` is indexed by author id and must cover every author.
    pub fn new(model: &'m TrainedUserModel, view: &GraphView<'_>, infospheres: &[Infosphere]) -> Result<Self> {
        model.check_graph(view.graph())?;
        let net = model.network()?;
        let structure = GraphStructure::from_view(view);
        let base = network::base_forward(&net, &model.params, &structure);
        let reps = infospheres
            .iter()
            .enumerate()
            .map(|(a, inf)| {
                let input = checked_input(view, &structure, inf)?;
                Ok(network::ego_forward(&net, &model.params, &base, a, &input).output().to_vec())
            })
            .collect::<Result<Vec<_>>>()?;
        if reps.len() != net.shape.n_authors {
            return Err(Error::Shape(format!(
                "expected {} infospheres, got {}",
                net.shape.n_authors,
                reps.len()
            )));
        }
        Ok(Self {
            net,
            params: &model.params,
            reps,
        })
    }

    pub fn representation(&self, a: AuthorId) -> &[f64] {
        &self.reps[a.idx()]
    }

    pub fn pair_probability(&self, u: AuthorId, v: AuthorId) -> f64 {
        sigmoid(network::pair_forward(&self.net, self.params, &self.reps[u.idx()], &self.reps[v.idx()]).logit)
    }

    pub fn count_prediction(&self, u: AuthorId) -> CountPrediction {
        network::count_forward(&self.net, self.params, &self.reps[u.idx()]).pred
    }
}
