//! Message-passing user model with hand-written backpropagation.
//!
//! Every node starts from a learned embedding. A shared stack of
//! mean-aggregation layers runs over the horizon-year graph, with one linear
//! transform per edge class (writes, cites, about). An author's own
//! representation is recomputed along an "ego" chain in which, at every layer,
//! the author additionally aggregates its infosphere elements through a
//! dedicated transform, weighted by `1 + max(score, 0)`. Only the author's own
//! infosphere reaches its representation.
//!
//! Heads:
//! - pair: `σ(w2 · tanh(W1 (h_u ⊙ h_v) + U1 (h_u + h_v) + b1) + b2)`
//! - count: `(μ, r) = softplus(w · h + b) + 1e-4` for each of the two.

use crate::error::{Error, Result};
use crate::graph::{AuthorId, GraphView, NodeRef};
use crate::numerics::{sigmoid, softplus, CountPrediction, ParamId, ParamStore};
use crate::recommenders::Infosphere;
use crate::rng::Rng;

use super::{GraphShape, ModelConfig};

pub const COUNT_FLOOR: f64 = 1e-4;
const EMBED_STD: f64 = 0.1;
const N_CLASSES: usize = 3;
const CLASS_NAMES: [&str; N_CLASSES] = ["writes", "cites", "about"];

#[derive(Debug, Clone)]
pub(crate) struct LayerIds {
    w_self: ParamId,
    w_class: [ParamId; N_CLASSES],
    w_inf: ParamId,
    bias: ParamId,
}

/// Parameter handles for one model instance.
#[derive(Debug, Clone)]
pub struct Network {
    pub dim: usize,
    pub hidden: usize,
    pub shape: GraphShape,
    embed: [ParamId; 3],
    layers: Vec<LayerIds>,
    pair_w1: ParamId,
    pair_u1: ParamId,
    pair_b1: ParamId,
    pair_w2: ParamId,
    pair_b2: ParamId,
    count_w_mu: ParamId,
    count_b_mu: ParamId,
    count_w_r: ParamId,
    count_b_r: ParamId,
}

impl Network {
    /// Allocates every parameter (all zeros) for a graph of the given shape.
    pub fn layout(shape: GraphShape, config: &ModelConfig) -> Result<(Network, ParamStore)> {
        config.validate()?;
        let d = config.embedding_dim;
        let h = config.hidden_dim;
        let mut s = ParamStore::new();
        let embed = [
            s.add("embed.author", &[shape.n_authors, d])?,
            s.add("embed.paper", &[shape.n_papers, d])?,
            s.add("embed.topic", &[shape.n_topics, d])?,
        ];
        let mut layers = Vec::with_capacity(config.mp_layers);
        for l in 0..config.mp_layers {
            let w_self = s.add(&format!("mp{l}.self"), &[d, d])?;
            let mut w_class = [w_self; N_CLASSES];
            for (c, name) in CLASS_NAMES.iter().enumerate() {
                w_class[c] = s.add(&format!("mp{l}.{name}"), &[d, d])?;
            }
            let w_inf = s.add(&format!("mp{l}.infosphere"), &[d, d])?;
            let bias = s.add(&format!("mp{l}.bias"), &[d])?;
            layers.push(LayerIds {
                w_self,
                w_class,
                w_inf,
                bias,
            });
        }
        let net = Network {
            dim: d,
            hidden: h,
            shape,
            embed,
            layers,
            pair_w1: s.add("pair.w1", &[h, d])?,
            pair_u1: s.add("pair.u1", &[h, d])?,
            pair_b1: s.add("pair.b1", &[h])?,
            pair_w2: s.add("pair.w2", &[h])?,
            pair_b2: s.add("pair.b2", &[1])?,
            count_w_mu: s.add("count.w_mu", &[d])?,
            count_b_mu: s.add("count.b_mu", &[1])?,
            count_w_r: s.add("count.w_r", &[d])?,
            count_b_r: s.add("count.b_r", &[1])?,
        };
        Ok((net, s))
    }

    /// Layout plus random initialization: normal embeddings, Glorot matrices,
    /// small normal head vectors, zero biases.
    pub fn init(shape: GraphShape, config: &ModelConfig, rng: &mut Rng) -> Result<(Network, ParamStore)> {
        let (net, layout) = Network::layout(shape, config)?;
        let mut s = ParamStore::new();
        for p in layout.iter() {
            let name = p.name.as_str();
            if name.starts_with("embed.") {
                s.add_normal(name, &p.shape, EMBED_STD, rng)?;
            } else if p.shape.len() == 2 {
                s.add_glorot(name, p.shape[0], p.shape[1], rng)?;
            } else if name == "pair.w2" {
                s.add_normal(name, &p.shape, (1.0 / net.hidden as f64).sqrt(), rng)?;
            } else if name.starts_with("count.w") {
                s.add_normal(name, &p.shape, 0.1, rng)?;
            } else {
                s.add(name, &p.shape)?;
            }
        }
        Ok((net, s))
    }

    /// Handles for an existing store, which must have exactly this layout.
    pub fn bind(shape: GraphShape, config: &ModelConfig, store: &ParamStore) -> Result<Network> {
        let (net, layout) = Network::layout(shape, config)?;
        layout
            .check_same_layout(store)
            .map_err(|e| Error::Integrity(format!("parameters do not match model layout: {e}")))?;
        Ok(net)
    }

    pub fn mp_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn count_head_ids(&self) -> [ParamId; 4] {
        [self.count_w_mu, self.count_b_mu, self.count_w_r, self.count_b_r]
    }

    pub fn pair_bias_id(&self) -> ParamId {
        self.pair_b2
    }

    /// Starts the output biases at the data's base rates: the pair logit at
    /// the log-odds of a positive, and the count head at moment-matched
    /// negative binomial parameters. `counts` may be empty to skip the latter.
    pub(crate) fn calibrate_biases(&self, params: &mut ParamStore, positive_rate: f64, counts: &[u64]) {
        if positive_rate > 0.0 && positive_rate < 1.0 {
            params.value_mut(self.pair_b2)[0] = (positive_rate / (1.0 - positive_rate)).ln();
        }
        if counts.is_empty() {
            return;
        }
        let n = counts.len() as f64;
        let mean = counts.iter().map(|&k| k as f64).sum::<f64>() / n;
        let var = counts.iter().map(|&k| (k as f64 - mean).powi(2)).sum::<f64>() / n;
        let dispersion = if var > mean * (1.0 + 1e-9) {
            (mean * mean / (var - mean)).clamp(MIN_TARGET, MAX_DISPERSION)
        } else {
            MAX_DISPERSION
        };
        params.value_mut(self.count_b_mu)[0] = softplus_inv((mean - COUNT_FLOOR).max(MIN_TARGET));
        params.value_mut(self.count_b_r)[0] = softplus_inv(dispersion - COUNT_FLOOR);
    }
}

const MIN_TARGET: f64 = 1e-3;
/// Under-dispersed counts have no finite moment estimate; this stands in.
const MAX_DISPERSION: f64 = 100.0;

fn softplus_inv(y: f64) -> f64 {
    y + (-(-y).exp_m1()).ln()
}

/// Compact adjacency of a horizon-year view over a global node index space:
/// authors first, then papers, then topics.
#[derive(Debug, Clone)]
pub struct GraphStructure {
    pub offsets: [usize; 3],
    pub n_nodes: usize,
    /// In-view nodes, ascending.
    pub nodes: Vec<u32>,
    nbrs: [Vec<Vec<u32>>; N_CLASSES],
}

impl GraphStructure {
    pub fn from_view(view: &GraphView<'_>) -> Self {
        let g = view.graph();
        let offsets = [0, g.n_authors(), g.n_authors() + g.n_papers()];
        let n_nodes = offsets[2] + g.n_topics();
        let mut nbrs: [Vec<Vec<u32>>; N_CLASSES] = std::array::from_fn(|_| vec![Vec::new(); n_nodes]);
        let paper = |p: crate::graph::PaperId| (offsets[1] + p.idx()) as u32;
        for (a, p) in view.writes_edges() {
            let (x, y) = (a.idx() as u32, paper(p));
            nbrs[0][x as usize].push(y);
            nbrs[0][y as usize].push(x);
        }
        for (c, d) in view.cites_edges() {
            let (x, y) = (paper(c), paper(d));
            nbrs[1][x as usize].push(y);
            nbrs[1][y as usize].push(x);
        }
        for (p, t) in view.about_edges() {
            let (x, y) = (paper(p), (offsets[2] + t.idx()) as u32);
            nbrs[2][x as usize].push(y);
            nbrs[2][y as usize].push(x);
        }
        let mut nodes: Vec<u32> = (0..offsets[1] as u32).collect();
        nodes.extend(view.papers().map(paper));
        nodes.extend((offsets[2]..n_nodes).map(|i| i as u32));
        Self {
            offsets,
            n_nodes,
            nodes,
            nbrs,
        }
    }

    pub fn index(&self, node: NodeRef) -> usize {
        match node {
            NodeRef::Author(a) => self.offsets[0] + a.idx(),
            NodeRef::Paper(p) => self.offsets[1] + p.idx(),
            NodeRef::Topic(t) => self.offsets[2] + t.idx(),
        }
    }
}

/// Infosphere elements as `(node index, normalized weight)` per author.
pub type InfosphereInput = Vec<Vec<(u32, f64)>>;

/// Element indices with weights `1 + max(score, 0)`, normalized to sum to one.
pub fn infosphere_weights(inf: &Infosphere, structure: &GraphStructure) -> Vec<(u32, f64)> {
    let raw: Vec<(u32, f64)> = inf
        .elements
        .iter()
        .map(|&(n, s)| (structure.index(n) as u32, 1.0 + s.max(0.0)))
        .collect();
    let total: f64 = raw.iter().map(|e| e.1).sum();
    raw.into_iter().map(|(i, w)| (i, w / total)).collect()
}

pub fn infosphere_input(spheres: &[Infosphere], structure: &GraphStructure) -> InfosphereInput {
    spheres.iter().map(|inf| infosphere_weights(inf, structure)).collect()
}

// ---- small dense helpers -------------------------------------------------

/// out += W x, W is `rows x cols` row-major.
#[inline]
fn matvec_add(w: &[f64], x: &[f64], out: &mut [f64]) {
    let cols = x.len();
    for (o, row) in out.iter_mut().zip(w.chunks_exact(cols)) {
        *o += row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
    }
}

/// out += Wᵀ y
#[inline]
fn matvec_t_add(w: &[f64], y: &[f64], out: &mut [f64]) {
    let cols = out.len();
    for (yi, row) in y.iter().zip(w.chunks_exact(cols)) {
        if *yi != 0.0 {
            for (o, a) in out.iter_mut().zip(row) {
                *o += yi * a;
            }
        }
    }
}

/// G += a bᵀ
#[inline]
fn outer_add(g: &mut [f64], a: &[f64], b: &[f64]) {
    let cols = b.len();
    for (ai, row) in a.iter().zip(g.chunks_exact_mut(cols)) {
        if *ai != 0.0 {
            for (gij, bj) in row.iter_mut().zip(b) {
                *gij += ai * bj;
            }
        }
    }
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

// ---- forward -------------------------------------------------------------

/// Shared node representations for layers `0..L`; the last layer is only
/// ever computed on ego chains.
pub struct BaseForward {
    dim: usize,
    /// `h[l]` is `n_nodes x dim`, for `l` in `0..L` (just the embeddings when L = 0).
    h: Vec<Vec<f64>>,
    /// `m[l][c]` is the class-`c` neighbour mean at layer `l`.
    m: Vec<[Vec<f64>; N_CLASSES]>,
}

impl BaseForward {
    fn row(&self, l: usize, i: usize) -> &[f64] {
        &self.h[l][i * self.dim..(i + 1) * self.dim]
    }
}

fn neighbour_means(structure: &GraphStructure, h: &[f64], dim: usize) -> [Vec<f64>; N_CLASSES] {
    std::array::from_fn(|c| {
        let mut m = vec![0.0; structure.n_nodes * dim];
        for &i in &structure.nodes {
            let list = &structure.nbrs[c][i as usize];
            if list.is_empty() {
                continue;
            }
            let inv = 1.0 / list.len() as f64;
            let out = &mut m[i as usize * dim..(i as usize + 1) * dim];
            for &j in list {
                axpy(inv, &h[j as usize * dim..(j as usize + 1) * dim], out);
            }
        }
        m
    })
}

pub fn base_forward(net: &Network, params: &ParamStore, structure: &GraphStructure) -> BaseForward {
    let d = net.dim;
    let mut h0 = vec![0.0; structure.n_nodes * d];
    for (class, &id) in net.embed.iter().enumerate() {
        let table = params.value(id);
        let off = structure.offsets[class] * d;
        h0[off..off + table.len()].copy_from_slice(table);
    }
    let l_total = net.layers.len();
    let mut h = vec![h0];
    let mut m = Vec::with_capacity(l_total);
    for l in 0..l_total {
        m.push(neighbour_means(structure, &h[l], d));
        if l + 1 == l_total {
            break;
        }
        let ids = &net.layers[l];
        let mut next = vec![0.0; structure.n_nodes * d];
        for &i in &structure.nodes {
            let i = i as usize;
            let out = &mut next[i * d..(i + 1) * d];
            out.copy_from_slice(params.value(ids.bias));
            matvec_add(params.value(ids.w_self), &h[l][i * d..(i + 1) * d], out);
            for c in 0..N_CLASSES {
                matvec_add(params.value(ids.w_class[c]), &m[l][c][i * d..(i + 1) * d], out);
            }
            out.iter_mut().for_each(|v| *v = v.tanh());
        }
        h.push(next);
    }
    BaseForward { dim: d, h, m }
}

/// Ego-chain activations for one author.
pub struct EgoForward {
    /// `g[l]` for `l` in `0..=L`; `g[L]` is the author representation.
    g: Vec<Vec<f64>>,
    /// Weighted infosphere aggregate at each layer.
    agg: Vec<Vec<f64>>,
}

impl EgoForward {
    pub fn output(&self) -> &[f64] {
        self.g.last().expect("at least the embedding")
    }
}

pub fn ego_forward(
    net: &Network,
    params: &ParamStore,
    base: &BaseForward,
    author: usize,
    infosphere: &[(u32, f64)],
) -> EgoForward {
    let d = net.dim;
    let mut g = vec![base.row(0, author).to_vec()];
    let mut agg = Vec::with_capacity(net.layers.len());
    for (l, ids) in net.layers.iter().enumerate() {
        let mut a = vec![0.0; d];
        for &(e, w) in infosphere {
            axpy(w, base.row(l, e as usize), &mut a);
        }
        let mut q = params.value(ids.bias).to_vec();
        matvec_add(params.value(ids.w_self), &g[l], &mut q);
        for c in 0..N_CLASSES {
            matvec_add(params.value(ids.w_class[c]), &base.m[l][c][author * d..(author + 1) * d], &mut q);
        }
        matvec_add(params.value(ids.w_inf), &a, &mut q);
        q.iter_mut().for_each(|v| *v = v.tanh());
        g.push(q);
        agg.push(a);
    }
    EgoForward { g, agg }
}

// ---- heads ---------------------------------------------------------------

pub struct PairForward {
    prod: Vec<f64>,
    sum: Vec<f64>,
    z: Vec<f64>,
    pub logit: f64,
}

pub fn pair_forward(net: &Network, params: &ParamStore, hu: &[f64], hv: &[f64]) -> PairForward {
    let prod: Vec<f64> = hu.iter().zip(hv).map(|(a, b)| a * b).collect();
    let sum: Vec<f64> = hu.iter().zip(hv).map(|(a, b)| a + b).collect();
    let mut z = params.value(net.pair_b1).to_vec();
    matvec_add(params.value(net.pair_w1), &prod, &mut z);
    matvec_add(params.value(net.pair_u1), &sum, &mut z);
    z.iter_mut().for_each(|v| *v = v.tanh());
    let logit = params.value(net.pair_b2)[0]
        + z.iter().zip(params.value(net.pair_w2)).map(|(a, b)| a * b).sum::<f64>();
    PairForward { prod, sum, z, logit }
}

/// Backpropagates `d_logit` into head parameters and the two representations.
pub fn pair_backward(
    net: &Network,
    params: &mut ParamStore,
    fwd: &PairForward,
    hu: &[f64],
    hv: &[f64],
    d_logit: f64,
    dhu: &mut [f64],
    dhv: &mut [f64],
) {
    params.grad_mut(net.pair_b2)[0] += d_logit;
    axpy(d_logit, &fwd.z, params.grad_mut(net.pair_w2));
    let dpre: Vec<f64> = params
        .value(net.pair_w2)
        .iter()
        .zip(&fwd.z)
        .map(|(w, z)| d_logit * w * (1.0 - z * z))
        .collect();
    axpy(1.0, &dpre, params.grad_mut(net.pair_b1));
    outer_add(params.grad_mut(net.pair_w1), &dpre, &fwd.prod);
    outer_add(params.grad_mut(net.pair_u1), &dpre, &fwd.sum);
    let mut dprod = vec![0.0; net.dim];
    let mut dsum = vec![0.0; net.dim];
    matvec_t_add(params.value(net.pair_w1), &dpre, &mut dprod);
    matvec_t_add(params.value(net.pair_u1), &dpre, &mut dsum);
    for k in 0..net.dim {
        dhu[k] += dprod[k] * hv[k] + dsum[k];
        dhv[k] += dprod[k] * hu[k] + dsum[k];
    }
}

pub struct CountForward {
    z_mu: f64,
    z_r: f64,
    pub pred: CountPrediction,
}

pub fn count_forward(net: &Network, params: &ParamStore, h: &[f64]) -> CountForward {
    let dot = |w: ParamId| h.iter().zip(params.value(w)).map(|(a, b)| a * b).sum::<f64>();
    let z_mu = dot(net.count_w_mu) + params.value(net.count_b_mu)[0];
    let z_r = dot(net.count_w_r) + params.value(net.count_b_r)[0];
    CountForward {
        z_mu,
        z_r,
        pred: CountPrediction {
            mu: softplus(z_mu) + COUNT_FLOOR,
            dispersion: softplus(z_r) + COUNT_FLOOR,
        },
    }
}

/// `d_mu`, `d_r` are loss derivatives with respect to the prediction.
pub fn count_backward(
    net: &Network,
    params: &mut ParamStore,
    fwd: &CountForward,
    h: &[f64],
    d_mu: f64,
    d_r: f64,
    dh: &mut [f64],
) {
    let dz_mu = d_mu * sigmoid(fwd.z_mu);
    let dz_r = d_r * sigmoid(fwd.z_r);
    params.grad_mut(net.count_b_mu)[0] += dz_mu;
    params.grad_mut(net.count_b_r)[0] += dz_r;
    axpy(dz_mu, h, params.grad_mut(net.count_w_mu));
    axpy(dz_r, h, params.grad_mut(net.count_w_r));
    axpy(dz_mu, params.value(net.count_w_mu), dh);
    axpy(dz_r, params.value(net.count_w_r), dh);
}

// ---- backward through the message passing --------------------------------

/// Gradient buffers for the shared layers, `dh[l]` for `l` in `0..L`.
pub struct BaseGrad {
    dh: Vec<Vec<f64>>,
}

impl BaseGrad {
    pub fn new(net: &Network, structure: &GraphStructure) -> Self {
        let levels = net.layers.len().max(1);
        Self {
            dh: vec![vec![0.0; structure.n_nodes * net.dim]; levels],
        }
    }
}

pub fn ego_backward(
    net: &Network,
    params: &mut ParamStore,
    structure: &GraphStructure,
    base: &BaseForward,
    ego: &EgoForward,
    author: usize,
    infosphere: &[(u32, f64)],
    d_out: &[f64],
    grad: &mut BaseGrad,
) {
    let d = net.dim;
    let mut dg = d_out.to_vec();
    for l in (0..net.layers.len()).rev() {
        let ids = net.layers[l].clone();
        let out = &ego.g[l + 1];
        let dq: Vec<f64> = dg.iter().zip(out).map(|(g, y)| g * (1.0 - y * y)).collect();
        outer_add(params.grad_mut(ids.w_self), &dq, &ego.g[l]);
        for c in 0..N_CLASSES {
            outer_add(params.grad_mut(ids.w_class[c]), &dq, &base.m[l][c][author * d..(author + 1) * d]);
        }
        outer_add(params.grad_mut(ids.w_inf), &dq, &ego.agg[l]);
        axpy(1.0, &dq, params.grad_mut(ids.bias));

        let mut next = vec![0.0; d];
        matvec_t_add(params.value(ids.w_self), &dq, &mut next);
        for c in 0..N_CLASSES {
            scatter_mean(params.value(ids.w_class[c]), &dq, &structure.nbrs[c][author], &mut grad.dh[l], d);
        }
        if !infosphere.is_empty() {
            let mut da = vec![0.0; d];
            matvec_t_add(params.value(ids.w_inf), &dq, &mut da);
            for &(e, w) in infosphere {
                let e = e as usize;
                axpy(w, &da, &mut grad.dh[l][e * d..(e + 1) * d]);
            }
        }
        dg = next;
    }
    // embedding of the author itself
    axpy(1.0, &dg, &mut grad.dh[0][author * d..(author + 1) * d]);
}

/// Pushes `Wᵀ dq` back to every neighbour with weight `1 / |N|`.
fn scatter_mean(w: &[f64], dq: &[f64], list: &[u32], dh: &mut [f64], d: usize) {
    if list.is_empty() {
        return;
    }
    let mut t = vec![0.0; d];
    matvec_t_add(w, dq, &mut t);
    let inv = 1.0 / list.len() as f64;
    for &j in list {
        let j = j as usize;
        axpy(inv, &t, &mut dh[j * d..(j + 1) * d]);
    }
}

/// Finishes the backward pass through the shared layers and the embeddings.
pub fn base_backward(
    net: &Network,
    params: &mut ParamStore,
    structure: &GraphStructure,
    base: &BaseForward,
    mut grad: BaseGrad,
) {
    let d = net.dim;
    let l_total = net.layers.len();
    for l in (0..l_total.saturating_sub(1)).rev() {
        let ids = net.layers[l].clone();
        let (lower, upper) = grad.dh.split_at_mut(l + 1);
        let dh_out = &upper[0];
        let dh_in = &mut lower[l];
        for &i in &structure.nodes {
            let i = i as usize;
            let g_out = &dh_out[i * d..(i + 1) * d];
            if g_out.iter().all(|&v| v == 0.0) {
                continue;
            }
            let y = base.row(l + 1, i);
            let dpre: Vec<f64> = g_out.iter().zip(y).map(|(g, y)| g * (1.0 - y * y)).collect();
            outer_add(params.grad_mut(ids.w_self), &dpre, base.row(l, i));
            for c in 0..N_CLASSES {
                outer_add(params.grad_mut(ids.w_class[c]), &dpre, &base.m[l][c][i * d..(i + 1) * d]);
            }
            axpy(1.0, &dpre, params.grad_mut(ids.bias));
            matvec_t_add(params.value(ids.w_self), &dpre, &mut dh_in[i * d..(i + 1) * d]);
            for c in 0..N_CLASSES {
                scatter_mean(params.value(ids.w_class[c]), &dpre, &structure.nbrs[c][i], dh_in, d);
            }
        }
    }
    let dh0 = &grad.dh[0];
    for (class, &id) in net.embed.iter().enumerate() {
        let off = structure.offsets[class] * d;
        let g = params.grad_mut(id);
        let n = g.len();
        for (gi, di) in g.iter_mut().zip(&dh0[off..off + n]) {
            *gi += di;
        }
    }
}

/// Representation of one author under a given infosphere.
pub fn embed_author(
    net: &Network,
    params: &ParamStore,
    structure: &GraphStructure,
    author: AuthorId,
    infosphere: &[(u32, f64)],
) -> Result<Vec<f64>> {
    if author.idx() >= net.shape.n_authors {
        return Err(Error::Lookup {
            kind: "author",
            id: author.0 as u64,
        });
    }
    let base = base_forward(net, params, structure);
    Ok(ego_forward(net, params, &base, author.idx(), infosphere).output().to_vec())
}
