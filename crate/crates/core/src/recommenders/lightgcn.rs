//! LightGCN collaborative filtering over the author–paper `writes` graph,
//! trained with BPR.
//!
//! Propagation uses the symmetrically normalized bipartite adjacency
//! `Â = D^-1/2 A D^-1/2`; the final embedding is the mean of layers
//! `E^(0) ..= E^(K)`. Because `Â` is symmetric, the backward pass through the
//! layer mean is the same operator applied to the output gradient.

use rand::Rng as _;

use super::LightGcnConfig;
use crate::error::{Error, Result};
use crate::graph::{AuthorId, GraphView, NodeRef, PaperId};
use crate::numerics::{
    bpr_loss, bpr_loss_grad, optimizer_step, AdamConfig, OptimizerState, ParamStore,
};
use crate::rng::Rng;

const INIT_STD: f64 = 0.1;

/// Author rows are all graph authors; paper rows are the in-view papers in
/// ascending id order.
#[derive(Debug, Clone)]
pub struct BipartiteAdjacency {
    pub n_authors: usize,
    pub paper_ids: Vec<PaperId>,
    row_of_paper: Vec<Option<usize>>,
    pub author_papers: Vec<Vec<usize>>,
    pub paper_authors: Vec<Vec<usize>>,
}

impl BipartiteAdjacency {
    pub fn from_view(view: &GraphView<'_>) -> Self {
        let g = view.graph();
        let paper_ids: Vec<PaperId> = view.papers().collect();
        let mut row_of_paper = vec![None; g.n_papers()];
        for (row, p) in paper_ids.iter().enumerate() {
            row_of_paper[p.idx()] = Some(row);
        }
        let mut author_papers = vec![Vec::new(); g.n_authors()];
        let mut paper_authors = vec![Vec::new(); paper_ids.len()];
        for (a, p) in view.writes_edges() {
            let row = row_of_paper[p.idx()].expect("in-view paper");
            author_papers[a.idx()].push(row);
            paper_authors[row].push(a.idx());
        }
        Self {
            n_authors: g.n_authors(),
            paper_ids,
            row_of_paper,
            author_papers,
            paper_authors,
        }
    }

    pub fn n_papers(&self) -> usize {
        self.paper_ids.len()
    }

    pub fn n_edges(&self) -> usize {
        self.author_papers.iter().map(Vec::len).sum()
    }

    pub fn paper_row(&self, p: PaperId) -> Option<usize> {
        self.row_of_paper.get(p.idx()).copied().flatten()
    }

    fn step(&self, cur_a: &[f64], cur_p: &[f64], dim: usize) -> (Vec<f64>, Vec<f64>) {
        let mut next_a = vec![0.0; cur_a.len()];
        let mut next_p = vec![0.0; cur_p.len()];
        for (u, papers) in self.author_papers.iter().enumerate() {
            let du = papers.len() as f64;
            for &p in papers {
                let w = 1.0 / (du * self.paper_authors[p].len() as f64).sqrt();
                let (src_p, src_a) = (&cur_p[p * dim..(p + 1) * dim], &cur_a[u * dim..(u + 1) * dim]);
                for k in 0..dim {
                    next_a[u * dim + k] += w * src_p[k];
                    next_p[p * dim + k] += w * src_a[k];
                }
            }
        }
        (next_a, next_p)
    }
}

/// Mean of `Â^k E` for `k = 0..=layers`, returned as (author rows, paper rows).
pub fn propagate(
    adj: &BipartiteAdjacency,
    author: &[f64],
    paper: &[f64],
    dim: usize,
    layers: usize,
) -> (Vec<f64>, Vec<f64>) {
    let mut sum_a = author.to_vec();
    let mut sum_p = paper.to_vec();
    let mut cur = (author.to_vec(), paper.to_vec());
    for _ in 0..layers {
        cur = adj.step(&cur.0, &cur.1, dim);
        sum_a.iter_mut().zip(&cur.0).for_each(|(s, c)| *s += c);
        sum_p.iter_mut().zip(&cur.1).for_each(|(s, c)| *s += c);
    }
    let scale = 1.0 / (layers as f64 + 1.0);
    sum_a.iter_mut().for_each(|v| *v *= scale);
    sum_p.iter_mut().for_each(|v| *v *= scale);
    (sum_a, sum_p)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CfEmbeddings {
    pub dim: usize,
    pub paper_ids: Vec<PaperId>,
    /// Final (layer-mean) author embeddings, row-major.
    pub author: Vec<f64>,
    /// Final paper embeddings, rows aligned with `paper_ids`.
    pub paper: Vec<f64>,
    /// Mean BPR loss per epoch, measured before that epoch's update.
    pub history: Vec<f64>,
    pub final_loss: f64,
    pub epochs_run: usize,
}

impl CfEmbeddings {
    pub fn n_authors(&self) -> usize {
        self.author.len() / self.dim.max(1)
    }

    pub fn author_row(&self, a: AuthorId) -> Option<&[f64]> {
        let i = a.idx();
        (i < self.n_authors()).then(|| &self.author[i * self.dim..(i + 1) * self.dim])
    }

    pub fn paper_row(&self, row: usize) -> &[f64] {
        &self.paper[row * self.dim..(row + 1) * self.dim]
    }

    pub fn score(&self, a: AuthorId, paper_row: usize) -> f64 {
        dot(self.author_row(a).expect("author row"), self.paper_row(paper_row))
    }

    /// Mean BPR loss over `(author, positive row, negative row)` triples.
    pub fn mean_bpr(&self, triples: &[(usize, usize, usize)]) -> f64 {
        if triples.is_empty() {
            return 0.0;
        }
        triples
            .iter()
            .map(|&(u, p, n)| bpr_loss(self.score(AuthorId(u as u32), p), self.score(AuthorId(u as u32), n)))
            .sum::<f64>()
            / triples.len() as f64
    }

    pub fn to_param_store(&self) -> ParamStore {
        let mut s = ParamStore::new();
        let n_a = self.n_authors();
        let n_p = self.paper_ids.len();
        let a = s.add("author_embed", &[n_a, self.dim]).expect("fresh store");
        s.value_mut(a).copy_from_slice(&self.author);
        let p = s.add("paper_embed", &[n_p, self.dim]).expect("fresh store");
        s.value_mut(p).copy_from_slice(&self.paper);
        let ids = s.add("paper_ids", &[n_p]).expect("fresh store");
        for (v, id) in s.value_mut(ids).iter_mut().zip(&self.paper_ids) {
            *v = id.0 as f64;
        }
        let h = s.add("train.history", &[self.history.len()]).expect("fresh store");
        s.value_mut(h).copy_from_slice(&self.history);
        let f = s.add("train.final_loss", &[]).expect("fresh store");
        s.value_mut(f)[0] = self.final_loss;
        let e = s.add("train.epochs", &[]).expect("fresh store");
        s.value_mut(e)[0] = self.epochs_run as f64;
        s
    }

    pub fn from_param_store(s: &ParamStore) -> Result<Self> {
        let get = |name: &str| {
            s.id(name)
                .ok_or_else(|| Error::Integrity(format!("embedding checkpoint lacks `{name}`")))
        };
        let a = s.get(get("author_embed")?);
        let dim = *a.shape.get(1).ok_or_else(|| Error::Shape("author_embed must be 2-d".into()))?;
        let paper_ids = s.value(get("paper_ids")?).iter().map(|&v| PaperId(v as u32)).collect();
        Ok(Self {
            dim,
            paper_ids,
            author: a.value.clone(),
            paper: s.value(get("paper_embed")?).to_vec(),
            history: s.value(get("train.history")?).to_vec(),
            final_loss: s.value(get("train.final_loss")?)[0],
            epochs_run: s.value(get("train.epochs")?)[0] as usize,
        })
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// One `(author, written paper, unwritten paper)` triple per positive and
/// negative draw. Authors who wrote every paper contribute nothing.
pub(crate) fn sample_triples(
    adj: &BipartiteAdjacency,
    negatives: usize,
    rng: &mut Rng,
) -> Vec<(usize, usize, usize)> {
    let n_p = adj.n_papers();
    let mut out = Vec::with_capacity(adj.n_edges() * negatives);
    for (u, papers) in adj.author_papers.iter().enumerate() {
        if papers.len() >= n_p {
            continue;
        }
        for &p in papers {
            for _ in 0..negatives {
                let n = loop {
                    let c = rng.random_range(0..n_p);
                    if !papers.contains(&c) {
                        break c;
                    }
                };
                out.push((u, p, n));
            }
        }
    }
    out
}

pub fn lightgcn_train(view: &GraphView<'_>, config: &LightGcnConfig, rng: &mut Rng) -> Result<CfEmbeddings> {
    let adj = BipartiteAdjacency::from_view(view);
    if adj.n_edges() == 0 {
        return Err(Error::Training("LightGCN needs at least one writes edge".into()));
    }
    let dim = config.embedding_dim;
    let mut params = ParamStore::new();
    let ea = params.add_normal("author_embed", &[adj.n_authors, dim], INIT_STD, rng)?;
    let ep = params.add_normal("paper_embed", &[adj.n_papers(), dim], INIT_STD, rng)?;
    let mut opt = OptimizerState::new(
        &params,
        AdamConfig {
            learning_rate: config.learning_rate,
            ..AdamConfig::default()
        },
    );
    let negatives = config.negatives_per_positive.max(1);

    let mut history = Vec::with_capacity(config.epochs);
    let mut last = None;
    for epoch in 0..config.epochs {
        let triples = sample_triples(&adj, negatives, rng);
        let (fa, fp) = propagate(&adj, params.value(ea), params.value(ep), dim, config.layers);
        let scale = 1.0 / triples.len().max(1) as f64;
        let mut ga = vec![0.0; fa.len()];
        let mut gp = vec![0.0; fp.len()];
        let mut loss = 0.0;
        for &(u, p, n) in &triples {
            let (ru, rp, rn) = (u * dim, p * dim, n * dim);
            let sp = dot(&fa[ru..ru + dim], &fp[rp..rp + dim]);
            let sn = dot(&fa[ru..ru + dim], &fp[rn..rn + dim]);
            loss += bpr_loss(sp, sn);
            let g = bpr_loss_grad(sp, sn) * scale;
            for k in 0..dim {
                ga[ru + k] += g * (fp[rp + k] - fp[rn + k]);
                gp[rp + k] += g * fa[ru + k];
                gp[rn + k] -= g * fa[ru + k];
            }
        }
        let loss = loss * scale;
        if !loss.is_finite() {
            return Err(Error::Training(format!("LightGCN loss diverged at epoch {epoch}")));
        }
        history.push(loss);
        let (da, dp) = propagate(&adj, &ga, &gp, dim, config.layers);
        params.grad_mut(ea).copy_from_slice(&da);
        params.grad_mut(ep).copy_from_slice(&dp);
        optimizer_step(&mut params, &mut opt)?;
        last = Some(epoch + 1);
    }

    let (author, paper) = propagate(&adj, params.value(ea), params.value(ep), dim, config.layers);
    let mut emb = CfEmbeddings {
        dim,
        paper_ids: adj.paper_ids.clone(),
        author,
        paper,
        history,
        final_loss: 0.0,
        epochs_run: last.unwrap_or(0),
    };
    let eval = sample_triples(&adj, negatives, rng);
    emb.final_loss = emb.mean_bpr(&eval);
    Ok(emb)
}

/// Top-`top_n` unwritten in-view papers by embedding dot product.
pub fn lightgcn_recommend(
    emb: &CfEmbeddings,
    view: &GraphView<'_>,
    author: AuthorId,
    top_n: usize,
) -> Result<Vec<(NodeRef, f64)>> {
    let row = emb.author_row(author).ok_or(Error::Lookup {
        kind: "author",
        id: author.0 as u64,
    })?;
    let written: std::collections::HashSet<PaperId> = view.papers_of(author).collect();
    let mut scored: Vec<(NodeRef, f64)> = emb
        .paper_ids
        .iter()
        .enumerate()
        .filter(|(_, p)| view.has_paper(**p) && !written.contains(p))
        .map(|(i, &p)| (NodeRef::Paper(p), dot(row, emb.paper_row(i))))
        .collect();
    super::sort_ranked(&mut scored);
    scored.truncate(top_n);
    Ok(scored)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{GraphBuilder, TemporalAcademicGraph};
    use crate::rng::rng_from;

    fn single_edge() -> TemporalAcademicGraph {
        let mut b = GraphBuilder::new();
        b.author(0).paper(0, 2000).writes(0, 0);
        b.build().unwrap()
    }

    #[test]
    fn single_edge_one_layer() {
        let g = single_edge();
        let adj = BipartiteAdjacency::from_view(&g.snapshot(2000).unwrap());
        let ea = [1.0, 2.0];
        let ep = [5.0, -1.0];
        let (fa, fp) = propagate(&adj, &ea, &ep, 2, 1);
        assert_eq!(fa, vec![3.0, 0.5]);
        assert_eq!(fp, vec![3.0, 0.5]);
    }

    #[test]
    fn empty_interactions_fail() {
        let mut b = GraphBuilder::new();
        b.author(0).paper(0, 2000);
        let g = b.build().unwrap();
        let err = lightgcn_train(&g.snapshot(2000).unwrap(), &LightGcnConfig::default(), &mut rng_from(0, &[]));
        assert!(matches!(err, Err(Error::Training(_))));
    }

    #[test]
    fn author_who_wrote_everything_gets_nothing() {
        let g = single_edge();
        let view = g.snapshot(2000).unwrap();
        let emb = lightgcn_train(
            &view,
            &LightGcnConfig {
                epochs: 3,
                ..LightGcnConfig::default()
            },
            &mut rng_from(0, &[]),
        )
        .unwrap();
        assert!(lightgcn_recommend(&emb, &view, AuthorId(0), 5).unwrap().is_empty());
        assert!(lightgcn_recommend(&emb, &view, AuthorId(3), 5).is_err());
    }

    #[test]
    fn checkpoint_round_trip() {
        let mut b = GraphBuilder::new();
        b.author(0).author(1).paper(0, 2000).paper(1, 2000).writes(0, 0).writes(1, 1).writes(1, 0);
        let g = b.build().unwrap();
        let emb = lightgcn_train(
            &g.snapshot(2000).unwrap(),
            &LightGcnConfig {
                epochs: 4,
                ..LightGcnConfig::default()
            },
            &mut rng_from(2, &[]),
        )
        .unwrap();
        let store = ParamStore::from_checkpoint(&emb.to_param_store().to_checkpoint()).unwrap();
        assert_eq!(CfEmbeddings::from_param_store(&store).unwrap(), emb);
    }

    #[test]
    fn oversized_top_n_returns_all_candidates_sorted() {
        let mut b = GraphBuilder::new();
        b.author(0).author(1);
        for p in 0..5 {
            b.paper(p, 2000).writes(1, p);
        }
        b.writes(0, 0);
        let g = b.build().unwrap();
        let view = g.snapshot(2000).unwrap();
        let emb = lightgcn_train(&view, &LightGcnConfig { epochs: 5, ..LightGcnConfig::default() }, &mut rng_from(1, &[])).unwrap();
        let recs = lightgcn_recommend(&emb, &view, AuthorId(0), 50).unwrap();
        assert_eq!(recs.len(), 4);
        assert!(recs.windows(2).all(|w| w[0].1 >= w[1].1));
    }
}
