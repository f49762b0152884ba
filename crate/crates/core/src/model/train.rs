//! Training and evaluation loops.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng as _;

use super::dataset::{build_eval_set, extract_real_dataset, EvalSet, NegativeSampler};
use super::network::{self, BaseGrad, GraphStructure, InfosphereInput, Network};
use super::{GraphShape, InteractionDataset, ModelConfig, TrainedUserModel};
use crate::error::{Error, Result};
use crate::graph::TemporalAcademicGraph;
use crate::numerics::{
    bce_with_logit, grad_check, nb_log_likelihood, nb_log_likelihood_grad, optimizer_step, AdamConfig,
    GradCheckOptions, GradCheckReport, OptimizerState, ParamStore,
};
use crate::recommenders::{InfosphereSet, RecommenderConfig, RecommenderKind};
use crate::rng::{rng_from, str_tag};

/// One recommender hypothesis with its precomputed infospheres.
pub type HypothesisInputs<'a> = (&'a RecommenderConfig, &'a InfosphereSet);

pub(crate) type PairBatch = [(u32, u32, bool)];
pub(crate) type CountBatch = [(u32, u64)];

/// Finite-difference check of the full training loss (pair BCE plus weighted
/// count NLL) at a freshly initialized model, on one batch holding every
/// positive, one corrupted negative per positive and every count target.
pub fn check_training_gradient(
    graph: &TemporalAcademicGraph,
    dataset: &InteractionDataset,
    recommender: &RecommenderConfig,
    config: &ModelConfig,
    options: GradCheckOptions,
) -> Result<GradCheckReport> {
    config.validate()?;
    dataset.validate(graph)?;
    let year = dataset.year - 1;
    let set = InfosphereSet::build(recommender, graph, year)?;
    check_inputs(graph, dataset, &[&set])?;
    let view = graph.snapshot(year)?;
    let structure = GraphStructure::from_view(&view);
    let input = network::infosphere_input(&set.by_author, &structure);
    let mut rng = rng_from(config.rng_seed, &[str_tag("gradcheck")]);
    let (net, mut params) = Network::init(GraphShape::of(graph), config, &mut rng)?;
    let sampler = NegativeSampler::new(&view, dataset);
    let mut pairs = Vec::new();
    for e in &dataset.positives {
        pairs.push((e.u.0, e.v.0, true));
        if let Some((a, b)) = sampler.draw(e.u, e.v, &mut rng) {
            pairs.push((a.0, b.0, false));
        }
    }
    let counts: Vec<(u32, u64)> = dataset.count_targets.iter().map(|(a, &k)| (a.0, k)).collect();
    let lambda = config.count_loss_weight;
    let mut failure = None;
    let report = grad_check(&mut params, options, |p| {
        match batch_loss(&net, p, &structure, &input, &pairs, &counts, lambda, true) {
            Ok(l) => l,
            Err(e) => {
                failure.get_or_insert(e);
                f64::NAN
            }
        }
    });
    match failure {
        Some(e) => Err(e),
        None => Ok(report),
    }
}

/// Mean BCE over `pairs` plus `lambda` times the mean negative NB
/// log-likelihood over `counts`. With `with_grad`, gradients are accumulated
/// into `params`. With `lambda == 0` the count head is never touched.
pub(crate) fn batch_loss(
    net: &Network,
    params: &mut ParamStore,
    structure: &GraphStructure,
    input: &InfosphereInput,
    pairs: &PairBatch,
    counts: &CountBatch,
    lambda: f64,
    with_grad: bool,
) -> Result<f64> {
    batch_loss_parts(net, params, structure, input, pairs, counts, lambda, with_grad).map(|(p, c)| p + lambda * c)
}

/// `(mean pair BCE, mean count NLL)`; the count part is zero when `lambda` is.
pub(crate) fn batch_loss_parts(
    net: &Network,
    params: &mut ParamStore,
    structure: &GraphStructure,
    input: &InfosphereInput,
    pairs: &PairBatch,
    counts: &CountBatch,
    lambda: f64,
    with_grad: bool,
) -> Result<(f64, f64)> {
    let d = net.dim;
    let use_counts = lambda > 0.0 && !counts.is_empty();
    let base = network::base_forward(net, params, structure);

    let mut slots: BTreeMap<u32, usize> = BTreeMap::new();
    let mut touch = |a: u32| {
        let n = slots.len();
        *slots.entry(a).or_insert(n)
    };
    for &(u, v, _) in pairs {
        touch(u);
        touch(v);
    }
    if use_counts {
        for &(a, _) in counts {
            touch(a);
        }
    }
    let mut order: Vec<(u32, usize)> = slots.iter().map(|(&a, &s)| (a, s)).collect();
    order.sort_by_key(|&(_, s)| s);
    let egos: Vec<network::EgoForward> = order
        .iter()
        .map(|&(a, _)| network::ego_forward(net, params, &base, a as usize, &input[a as usize]))
        .collect();

    let mut dh = vec![vec![0.0; d]; egos.len()];
    let mut loss = 0.0;
    let mut count_loss = 0.0;
    if !pairs.is_empty() {
        let scale = 1.0 / pairs.len() as f64;
        let mut du = vec![0.0; d];
        let mut dv = vec![0.0; d];
        for &(u, v, label) in pairs {
            let (su, sv) = (slots[&u], slots[&v]);
            let (hu, hv) = (egos[su].output(), egos[sv].output());
            let fwd = network::pair_forward(net, params, hu, hv);
            let (l, dz) = bce_with_logit(fwd.logit, label);
            loss += l * scale;
            if with_grad {
                du.iter_mut().for_each(|x| *x = 0.0);
                dv.iter_mut().for_each(|x| *x = 0.0);
                network::pair_backward(net, params, &fwd, hu, hv, dz * scale, &mut du, &mut dv);
                add_into(&mut dh[su], &du);
                add_into(&mut dh[sv], &dv);
            }
        }
    }
    if use_counts {
        let scale = lambda / counts.len() as f64;
        for &(a, k) in counts {
            let s = slots[&a];
            let h = egos[s].output();
            let fwd = network::count_forward(net, params, h);
            let ll = nb_log_likelihood(k, fwd.pred).map_err(|e| Error::Training(e.to_string()))?;
            count_loss -= ll / counts.len() as f64;
            if with_grad {
                let (d_mu, d_r) = nb_log_likelihood_grad(k, fwd.pred).map_err(|e| Error::Training(e.to_string()))?;
                network::count_backward(net, params, &fwd, h, -d_mu * scale, -d_r * scale, &mut dh[s]);
            }
        }
    }
    if with_grad {
        let mut grad = BaseGrad::new(net, structure);
        for (&(a, s), ego) in order.iter().zip(&egos) {
            network::ego_backward(net, params, structure, &base, ego, a as usize, &input[a as usize], &dh[s], &mut grad);
        }
        network::base_backward(net, params, structure, &base, grad);
    }
    Ok((loss, count_loss))
}

fn add_into(acc: &mut [f64], x: &[f64]) {
    for (a, b) in acc.iter_mut().zip(x) {
        *a += b;
    }
}

fn check_inputs(graph: &TemporalAcademicGraph, dataset: &InteractionDataset, sets: &[&InfosphereSet]) -> Result<()> {
    let horizon = dataset.year - 1;
    for set in sets {
        if set.year != horizon {
            return Err(Error::Integrity(format!(
                "{} infospheres were built at {}, dataset needs {horizon}",
                set.kind, set.year
            )));
        }
        if set.by_author.len() != graph.n_authors() {
            return Err(Error::Shape(format!(
                "{} infospheres cover {} authors, graph has {}",
                set.kind,
                set.by_author.len(),
                graph.n_authors()
            )));
        }
    }
    Ok(())
}

/// Trains from scratch. Each batch uses the infospheres of one pool entry
/// drawn uniformly from a dedicated random stream; a single-entry pool is
/// plain training under that recommender.
pub fn train_with_infospheres(
    graph: &TemporalAcademicGraph,
    dataset: &InteractionDataset,
    pool: &[HypothesisInputs<'_>],
    config: &ModelConfig,
) -> Result<TrainedUserModel> {
    config.validate()?;
    if pool.is_empty() {
        return Err(Error::Config("recommender pool is empty".into()));
    }
    if dataset.is_empty() {
        return Err(Error::Domain("cannot train on an empty dataset".into()));
    }
    dataset.validate(graph)?;
    check_inputs(graph, dataset, &pool.iter().map(|p| p.1).collect::<Vec<_>>())?;

    let view = graph.snapshot(dataset.year - 1)?;
    let structure = GraphStructure::from_view(&view);
    let inputs: Vec<InfosphereInput> = pool
        .iter()
        .map(|(_, set)| network::infosphere_input(&set.by_author, &structure))
        .collect();
    let shape = GraphShape::of(graph);
    let (net, mut params) = Network::init(shape, config, &mut rng_from(config.rng_seed, &[str_tag("init")]))?;
    let positive_rate = 1.0 / (1.0 + config.negatives_per_positive as f64);
    let count_values: Vec<u64> = if config.count_loss_weight > 0.0 {
        dataset.count_targets.values().copied().collect()
    } else {
        Vec::new()
    };
    net.calibrate_biases(&mut params, positive_rate, &count_values);
    let mut opt = OptimizerState::new(
        &params,
        AdamConfig {
            learning_rate: config.learning_rate,
            ..AdamConfig::default()
        },
    );
    let sampler = NegativeSampler::new(&view, dataset);
    let mut draw_rng = rng_from(config.rng_seed, &[str_tag("pool-draws")]);
    let mut draws = vec![0u64; pool.len()];
    let counts: Vec<(u32, u64)> = dataset.count_targets.iter().map(|(a, &k)| (a.0, k)).collect();
    let mut history = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        let mut rng = rng_from(config.rng_seed, &[str_tag("epoch"), epoch as u64]);
        let mut examples: Vec<(u32, u32, bool)> =
            Vec::with_capacity(dataset.positives.len() * (1 + config.negatives_per_positive));
        for e in &dataset.positives {
            examples.push((e.u.0, e.v.0, true));
            for _ in 0..config.negatives_per_positive {
                if let Some((a, b)) = sampler.draw(e.u, e.v, &mut rng) {
                    examples.push((a.0, b.0, false));
                }
            }
        }
        examples.shuffle(&mut rng);
        let mut epoch_counts = counts.clone();
        epoch_counts.shuffle(&mut rng);

        let n_batches = examples.len().div_ceil(config.batch_size).max(1);
        let mut total = 0.0;
        for b in 0..n_batches {
            let pairs = &examples[(b * config.batch_size).min(examples.len())..((b + 1) * config.batch_size).min(examples.len())];
            let chunk = &epoch_counts[b * epoch_counts.len() / n_batches..(b + 1) * epoch_counts.len() / n_batches];
            let pick = draw_rng.random_range(0..pool.len());
            draws[pick] += 1;
            let context = |e: Error| Error::Training(format!("epoch {epoch}, batch {b}: {e}"));
            let loss = batch_loss(
                &net,
                &mut params,
                &structure,
                &inputs[pick],
                pairs,
                chunk,
                config.count_loss_weight,
                true,
            )
            .map_err(context)?;
            if !loss.is_finite() {
                return Err(Error::Training(format!("epoch {epoch}, batch {b}: non-finite loss {loss}")));
            }
            optimizer_step(&mut params, &mut opt).map_err(context)?;
            total += loss;
        }
        history.push(total / n_batches as f64);
        tracing::debug!(epoch, loss = total / n_batches as f64, "epoch done");
    }

    Ok(TrainedUserModel {
        params,
        config: config.clone(),
        shape,
        recommender_used: pool[0].0.clone(),
        pool: pool.iter().map(|p| p.0.clone()).collect(),
        pool_draws: draws,
        year: dataset.year - 1,
        history,
    })
}

/// Trains with the infospheres `recommender` shows at the dataset's horizon.
pub fn train_user_model(
    graph: &TemporalAcademicGraph,
    dataset: &InteractionDataset,
    recommender: &RecommenderConfig,
    config: &ModelConfig,
) -> Result<TrainedUserModel> {
    let set = InfosphereSet::build(recommender, graph, dataset.year - 1)?;
    train_with_infospheres(graph, dataset, &[(recommender, &set)], config)
}

/// Recommender-neutral model: trained on the real `year + 1` outcomes with
/// hindsight infospheres.
pub fn train_rnu(graph: &TemporalAcademicGraph, year: crate::graph::Year, config: &ModelConfig) -> Result<TrainedUserModel> {
    let dataset = extract_real_dataset(graph, year, config.rng_seed)?;
    let recommender = RecommenderConfig::of_kind(RecommenderKind::Predictive);
    train_user_model(graph, &dataset, &recommender, config)
}

/// Recommender-neutral model by averaging over a pool of recommenders.
pub fn train_rnu_marginalized(
    graph: &TemporalAcademicGraph,
    year: crate::graph::Year,
    pool: &[RecommenderConfig],
    config: &ModelConfig,
) -> Result<TrainedUserModel> {
    if pool.is_empty() {
        return Err(Error::Config("recommender pool is empty".into()));
    }
    let dataset = extract_real_dataset(graph, year, config.rng_seed)?;
    let sets = pool
        .iter()
        .map(|r| InfosphereSet::build(r, graph, year))
        .collect::<Result<Vec<_>>>()?;
    let inputs: Vec<HypothesisInputs<'_>> = pool.iter().zip(&sets).collect();
    train_with_infospheres(graph, &dataset, &inputs, config)
}

/// Mean held-out loss on a prepared evaluation set.
pub fn evaluate_on(
    model: &TrainedUserModel,
    graph: &TemporalAcademicGraph,
    eval: &EvalSet,
    infospheres: &InfosphereSet,
) -> Result<f64> {
    let parts = evaluate_parts(model, graph, eval, infospheres)?;
    Ok(parts.total)
}

/// Held-out loss split into its pair and count terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossParts {
    pub total: f64,
    pub pair_bce: f64,
    pub count_nll: f64,
}

pub fn evaluate_parts(
    model: &TrainedUserModel,
    graph: &TemporalAcademicGraph,
    eval: &EvalSet,
    infospheres: &InfosphereSet,
) -> Result<LossParts> {
    model.check_graph(graph)?;
    let view = graph.snapshot(eval.year - 1)?;
    if infospheres.year != eval.year - 1 || infospheres.by_author.len() != graph.n_authors() {
        return Err(Error::Integrity("infospheres do not match the evaluation horizon".into()));
    }
    let structure = GraphStructure::from_view(&view);
    let input = network::infosphere_input(&infospheres.by_author, &structure);
    let net = model.network()?;
    let pairs: Vec<(u32, u32, bool)> = eval.pairs.iter().map(|&(a, b, l)| (a.0, b.0, l)).collect();
    let counts: Vec<(u32, u64)> = eval.counts.iter().map(|&(a, k)| (a.0, k)).collect();
    let mut params = model.params.clone();
    let lambda = model.config.count_loss_weight;
    let (pair_bce, count_nll) = batch_loss_parts(&net, &mut params, &structure, &input, &pairs, &counts, lambda, false)?;
    let total = pair_bce + lambda * count_nll;
    if !total.is_finite() {
        return Err(Error::Training(format!("non-finite evaluation loss {total}")));
    }
    Ok(LossParts {
        total,
        pair_bce,
        count_nll,
    })
}

/// Held-out loss of `model` on `dataset` with infospheres under `recommender`.
pub fn evaluate_nll(
    model: &TrainedUserModel,
    graph: &TemporalAcademicGraph,
    dataset: &InteractionDataset,
    recommender: &RecommenderConfig,
) -> Result<f64> {
    let eval = build_eval_set(graph, dataset, model.config.negatives_per_positive)?;
    let set = InfosphereSet::build(recommender, graph, dataset.year - 1)?;
    evaluate_on(model, graph, &eval, &set)
}
