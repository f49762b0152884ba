//! The recognition grid: one synthetic dataset per generating recommender,
//! one freshly trained model per hypothesis, and the held-out loss matrix.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{TemporalAcademicGraph, Year};
use crate::model::{build_eval_set, evaluate_parts, train_with_infospheres, ModelConfig, TrainedUserModel};
use crate::recommenders::{InfosphereSet, RecommenderConfig, RecommenderKind};
use crate::rng::{derive_seed, str_tag};
use crate::synthgen::{generate_rhsd_with, SynthGenConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RecognitionConfig {
    pub candidates: Vec<RecommenderConfig>,
    pub include_predictive_as_hypothesis: bool,
    pub model: ModelConfig,
    pub synth: SynthGenConfig,
    pub master_seed: u64,
    pub holdout_fraction: f64,
}

impl Default for RecognitionConfig {
    fn default() -> Self {
        Self {
            candidates: [
                RecommenderKind::Null,
                RecommenderKind::TopPaper,
                RecommenderKind::TopPaperTopic,
                RecommenderKind::Lightgcn,
            ]
            .into_iter()
            .map(RecommenderConfig::of_kind)
            .collect(),
            include_predictive_as_hypothesis: false,
            model: ModelConfig::default(),
            synth: SynthGenConfig::default(),
            master_seed: 0,
            holdout_fraction: 0.2,
        }
    }
}

impl RecognitionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.candidates.len() < 2 {
            return Err(Error::Config("recognition needs at least 2 candidate recommenders".into()));
        }
        let kinds: BTreeSet<_> = self.candidates.iter().map(|c| c.kind).collect();
        if kinds.len() != self.candidates.len() {
            return Err(Error::Config("candidate recommender kinds must be unique".into()));
        }
        if !(self.holdout_fraction > 0.0 && self.holdout_fraction < 1.0) {
            return Err(Error::Config("holdout_fraction must lie in (0, 1)".into()));
        }
        for c in &self.candidates {
            c.validate()?;
        }
        self.model.validate()?;
        self.synth.validate()?;
        if generator_indices(self).is_empty() {
            return Err(Error::Config("no candidate can act as a generator".into()));
        }
        Ok(())
    }
}

/// Indices (into the candidate list) of the hypothesis columns: predictive is
/// dropped unless explicitly requested. Fewer than two is a configuration
/// error.
pub fn exclude_predictive(config: &RecognitionConfig) -> Result<Vec<usize>> {
    let cols: Vec<usize> = config
        .candidates
        .iter()
        .enumerate()
        .filter(|(_, c)| config.include_predictive_as_hypothesis || c.kind != RecommenderKind::Predictive)
        .map(|(i, _)| i)
        .collect();
    if cols.len() < 2 {
        return Err(Error::Config(format!(
            "only {} usable hypothesis recommender(s); need at least 2",
            cols.len()
        )));
    }
    Ok(cols)
}

/// Predictive uses future data and never generates a dataset.
fn generator_indices(config: &RecognitionConfig) -> Vec<usize> {
    config
        .candidates
        .iter()
        .enumerate()
        .filter(|(_, c)| c.kind != RecommenderKind::Predictive)
        .map(|(i, _)| i)
        .collect()
}

/// Seed of cell `(row, col)`, indexed by position in the full candidate list.
pub fn cell_seed(master: u64, row: usize, col: usize) -> u64 {
    derive_seed(master, &[str_tag("cell"), row as u64, col as u64])
}

pub fn row_seed(master: u64, row: usize) -> u64 {
    derive_seed(master, &[str_tag("row"), row as u64])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Identification {
    pub winner: RecommenderKind,
    pub index: usize,
    pub tie: bool,
}

/// Argmin over the usable (finite) entries; ties go to the earliest column.
pub fn identify(row: &[Option<f64>], candidates: &[RecommenderKind]) -> Result<Identification> {
    if row.len() != candidates.len() {
        return Err(Error::Shape(format!("{} losses for {} candidates", row.len(), candidates.len())));
    }
    let mut best: Option<(usize, f64)> = None;
    let mut tie = false;
    for (i, v) in row.iter().enumerate() {
        let Some(v) = v.filter(|v| v.is_finite()) else { continue };
        match best {
            None => best = Some((i, v)),
            Some((_, b)) if v < b => {
                best = Some((i, v));
                tie = false;
            }
            Some((_, b)) if v == b => tie = true,
            _ => {}
        }
    }
    let (index, _) = best.ok_or_else(|| Error::Identification("every entry in the row failed".into()))?;
    Ok(Identification {
        winner: candidates[index],
        index,
        tie,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub generator: RecommenderKind,
    pub hypothesis: RecommenderKind,
    pub seed: u64,
    pub loss: Option<f64>,
    /// Pair and count terms of `loss`.
    pub pair_loss: Option<f64>,
    pub count_loss: Option<f64>,
    pub error: Option<String>,
    pub epochs: usize,
    pub final_train_loss: Option<f64>,
    /// Fingerprint of the evaluation examples, shared by every cell in a row.
    pub eval_checksum: String,
    pub eval_examples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowInfo {
    pub generator: RecommenderKind,
    pub synth_seed: u64,
    pub dataset_seed: u64,
    pub edges: usize,
    pub train_pairs: usize,
    pub holdout_pairs: usize,
    pub rnu_checkpoint: String,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedsManifest {
    pub master_seed: u64,
    pub rule: String,
    pub candidates: Vec<RecommenderKind>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecognitionReport {
    pub year: Year,
    pub rows: Vec<RecommenderKind>,
    pub columns: Vec<RecommenderKind>,
    /// `loss_matrix[r][c]`; `None` marks a failed cell.
    pub loss_matrix: Vec<Vec<Option<f64>>>,
    pub identified: Vec<Option<Identification>>,
    pub accuracy: f64,
    pub cells: Vec<CellResult>,
    pub row_info: Vec<RowInfo>,
    pub seeds: SeedsManifest,
    pub config: RecognitionConfig,
}

/// Wall-clock seconds per cell, kept apart from the report so that reports
/// stay byte-identical across reruns.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GridTimings {
    pub cells: Vec<(RecommenderKind, RecommenderKind, f64)>,
    pub total_seconds: f64,
}

fn summarize(
    rows: &[RecommenderKind],
    columns: &[RecommenderKind],
    matrix: &[Vec<Option<f64>>],
) -> (Vec<Option<Identification>>, f64) {
    let identified: Vec<Option<Identification>> = matrix.iter().map(|row| identify(row, columns).ok()).collect();
    let mut eligible = 0usize;
    let mut correct = 0usize;
    for ((r, row), id) in rows.iter().zip(matrix).zip(&identified) {
        if row.iter().all(|v| v.is_some()) {
            eligible += 1;
            if id.as_ref().is_some_and(|id| id.winner == *r) {
                correct += 1;
            }
        }
    }
    let accuracy = if eligible == 0 { 0.0 } else { correct as f64 / eligible as f64 };
    (identified, accuracy)
}

impl RecognitionReport {
    pub fn loss(&self, generator: RecommenderKind, hypothesis: RecommenderKind) -> Option<f64> {
        let r = self.rows.iter().position(|&k| k == generator)?;
        let c = self.columns.iter().position(|&k| k == hypothesis)?;
        self.loss_matrix[r][c]
    }

    pub fn failed_cells(&self) -> usize {
        self.cells.iter().filter(|c| c.loss.is_none()).count()
    }

    /// The same report seen through a subset of hypothesis columns.
    pub fn restrict_columns(&self, keep: &[RecommenderKind]) -> Result<Self> {
        let idx = keep
            .iter()
            .map(|k| {
                self.columns
                    .iter()
                    .position(|c| c == k)
                    .ok_or_else(|| Error::Shape(format!("no column for {k}")))
            })
            .collect::<Result<Vec<_>>>()?;
        let matrix: Vec<Vec<Option<f64>>> =
            self.loss_matrix.iter().map(|row| idx.iter().map(|&i| row[i]).collect()).collect();
        let (identified, accuracy) = summarize(&self.rows, keep, &matrix);
        let mut config = self.config.clone();
        config.include_predictive_as_hypothesis = keep.contains(&RecommenderKind::Predictive);
        Ok(Self {
            columns: keep.to_vec(),
            loss_matrix: matrix,
            identified,
            accuracy,
            cells: self.cells.iter().filter(|c| keep.contains(&c.hypothesis)).cloned().collect(),
            config,
            ..self.clone()
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse {
            line: e.line(),
            message: e.to_string(),
        })
    }

    /// Comma-separated loss table; failed cells are empty.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("generator");
        for c in &self.columns {
            write!(out, ",{c}").unwrap();
        }
        out.push('\n');
        for (r, row) in self.rows.iter().zip(&self.loss_matrix) {
            out.push_str(r.as_str());
            for v in row {
                match v {
                    Some(v) => write!(out, ",{v}").unwrap(),
                    None => out.push(','),
                }
            }
            out.push('\n');
        }
        out
    }

    /// Simple heatmap, darker = lower loss within the row; the row minimum is
    /// outlined.
    pub fn to_svg(&self) -> String {
        const CELL: usize = 90;
        const LEFT: usize = 140;
        const TOP: usize = 60;
        let w = LEFT + CELL * self.columns.len() + 20;
        let h = TOP + CELL * self.rows.len() + 20;
        let mut s = format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" font-family=\"sans-serif\" font-size=\"12\">\n"
        );
        for (j, c) in self.columns.iter().enumerate() {
            writeln!(s, "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{c}</text>", LEFT + CELL * j + CELL / 2, TOP - 10).unwrap();
        }
        for (i, (r, row)) in self.rows.iter().zip(&self.loss_matrix).enumerate() {
            let y = TOP + CELL * i;
            writeln!(s, "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{r}</text>", LEFT - 8, y + CELL / 2).unwrap();
            let finite: Vec<f64> = row.iter().flatten().copied().collect();
            let lo = finite.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = finite.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let best = self.identified[i].as_ref().map(|id| id.index);
            for (j, v) in row.iter().enumerate() {
                let x = LEFT + CELL * j;
                let (fill, label) = match v {
                    Some(v) => {
                        let t = if hi > lo { (v - lo) / (hi - lo) } else { 0.0 };
                        let shade = (40.0 + 200.0 * t) as u8;
                        (format!("rgb({shade},{shade},255)"), format!("{v:.4}"))
                    }
                    None => ("rgb(220,220,220)".to_string(), "failed".to_string()),
                };
                let stroke = if best == Some(j) { "black\" stroke-width=\"3" } else { "white" };
                writeln!(s, "<rect x=\"{x}\" y=\"{y}\" width=\"{CELL}\" height=\"{CELL}\" fill=\"{fill}\" stroke=\"{stroke}\"/>").unwrap();
                writeln!(s, "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{label}</text>", x + CELL / 2, y + CELL / 2).unwrap();
            }
        }
        s.push_str("</svg>\n");
        s
    }
}

/// Loss table as written by [`RecognitionReport::to_csv`].
#[derive(Debug, Clone, PartialEq)]
pub struct LossTable {
    pub rows: Vec<RecommenderKind>,
    pub columns: Vec<RecommenderKind>,
    pub matrix: Vec<Vec<Option<f64>>>,
}

pub fn parse_loss_csv(text: &str) -> Result<LossTable> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let err = |line: usize, message: String| Error::Parse { line: line + 1, message };
    let (hl, header) = lines.next().ok_or_else(|| err(0, "empty table".into()))?;
    let mut head = header.split(',');
    if head.next() != Some("generator") {
        return Err(err(hl, "first header cell must be `generator`".into()));
    }
    let columns = head
        .map(|c| c.parse::<RecommenderKind>().map_err(|e| err(hl, e.to_string())))
        .collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::new();
    let mut matrix = Vec::new();
    for (i, line) in lines {
        let mut cells = line.split(',');
        let r = cells.next().unwrap_or_default();
        rows.push(r.parse::<RecommenderKind>().map_err(|e| err(i, e.to_string()))?);
        let values = cells
            .map(|c| {
                if c.is_empty() {
                    Ok(None)
                } else {
                    c.parse::<f64>().map(Some).map_err(|_| err(i, format!("invalid number `{c}`")))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        if values.len() != columns.len() {
            return Err(err(i, format!("expected {} values, got {}", columns.len(), values.len())));
        }
        matrix.push(values);
    }
    Ok(LossTable { rows, columns, matrix })
}

struct RowData {
    train: crate::model::InteractionDataset,
    eval: crate::model::EvalSet,
}

/// Runs every generator × hypothesis cell. Cells run in parallel on the
/// current rayon pool; results are placed deterministically.
pub fn run_grid(
    graph: &TemporalAcademicGraph,
    year: Year,
    rnu: &TrainedUserModel,
    config: &RecognitionConfig,
) -> Result<(RecognitionReport, GridTimings)> {
    let started = Instant::now();
    config.validate()?;
    rnu.check_graph(graph)?;
    let col_idx = exclude_predictive(config)?;
    let row_idx = generator_indices(config);
    let needed: BTreeSet<usize> = col_idx.iter().chain(&row_idx).copied().collect();

    let sets: BTreeMap<usize, InfosphereSet> = needed
        .par_iter()
        .map(|&i| Ok((i, InfosphereSet::build(&config.candidates[i], graph, year)?)))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .collect();
    let fingerprint = format!("{:016x}", rnu.fingerprint());

    let row_results: Vec<(RowInfo, Option<RowData>)> = row_idx
        .par_iter()
        .map(|&r| {
            let rec = &config.candidates[r];
            let synth_seed = derive_seed(row_seed(config.master_seed, r), &[str_tag("synth")]);
            let dataset_seed = derive_seed(row_seed(config.master_seed, r), &[str_tag("dataset")]);
            let mut info = RowInfo {
                generator: rec.kind,
                synth_seed,
                dataset_seed,
                edges: 0,
                train_pairs: 0,
                holdout_pairs: 0,
                rnu_checkpoint: fingerprint.clone(),
                error: None,
            };
            let built = (|| -> Result<RowData> {
                let synth = SynthGenConfig {
                    rng_seed: synth_seed,
                    ..config.synth.clone()
                };
                let mut ds = generate_rhsd_with(rnu, graph, year, rec, &sets[&r], &synth)?.dataset;
                ds.seed = dataset_seed;
                let (train, holdout) = ds.split(config.holdout_fraction)?;
                let train_pairs: BTreeSet<_> = train.pairs().collect();
                if holdout.pairs().any(|p| train_pairs.contains(&p)) {
                    return Err(Error::Integrity("holdout overlaps training split".into()));
                }
                let eval = build_eval_set(graph, &holdout, config.model.negatives_per_positive)?;
                Ok(RowData { train, eval })
            })();
            match built {
                Ok(data) => {
                    info.edges = data.train.positives.len() + data.eval.pairs.iter().filter(|p| p.2).count();
                    info.train_pairs = data.train.positives.len();
                    info.holdout_pairs = data.eval.pairs.iter().filter(|p| p.2).count();
                    (info, Some(data))
                }
                Err(e) => {
                    tracing::warn!(generator = %rec.kind, error = %e, "dataset generation failed");
                    info.error = Some(e.to_string());
                    (info, None)
                }
            }
        })
        .collect();

    let jobs: Vec<(usize, usize)> = (0..row_idx.len())
        .flat_map(|ri| (0..col_idx.len()).map(move |ci| (ri, ci)))
        .collect();
    let cells: Vec<(CellResult, f64)> = jobs
        .par_iter()
        .map(|&(ri, ci)| {
            let t0 = Instant::now();
            let (r, c) = (row_idx[ri], col_idx[ci]);
            let seed = cell_seed(config.master_seed, r, c);
            let mut cell = CellResult {
                generator: config.candidates[r].kind,
                hypothesis: config.candidates[c].kind,
                seed,
                loss: None,
                pair_loss: None,
                count_loss: None,
                error: None,
                epochs: 0,
                final_train_loss: None,
                eval_checksum: String::new(),
                eval_examples: 0,
            };
            match &row_results[ri].1 {
                None => cell.error = Some("dataset generation failed".into()),
                Some(data) => {
                    cell.eval_checksum = data.eval.checksum_hex();
                    cell.eval_examples = data.eval.pairs.len() + data.eval.counts.len();
                    let model_cfg = ModelConfig {
                        rng_seed: seed,
                        ..config.model.clone()
                    };
                    let outcome = train_with_infospheres(graph, &data.train, &[(&config.candidates[c], &sets[&c])], &model_cfg)
                        .and_then(|m| {
                            let loss = evaluate_parts(&m, graph, &data.eval, &sets[&c])?;
                            Ok((m, loss))
                        });
                    match outcome {
                        Ok((m, loss)) => {
                            cell.epochs = m.history.len();
                            cell.final_train_loss = m.history.last().copied();
                            cell.loss = Some(loss.total);
                            cell.pair_loss = Some(loss.pair_bce);
                            cell.count_loss = Some(loss.count_nll);
                        }
                        Err(e) => {
                            tracing::warn!(generator = %cell.generator, hypothesis = %cell.hypothesis, error = %e, "cell failed");
                            cell.error = Some(e.to_string());
                        }
                    }
                }
            }
            tracing::info!(generator = %cell.generator, hypothesis = %cell.hypothesis, loss = ?cell.loss, "cell done");
            (cell, t0.elapsed().as_secs_f64())
        })
        .collect();

    let failed = cells.iter().filter(|c| c.0.loss.is_none()).count();
    if failed * 2 >= cells.len() {
        let status = cells
            .iter()
            .map(|(c, _)| {
                let outcome = match (&c.loss, &c.error) {
                    (Some(l), _) => format!("ok {l:.6}"),
                    (None, Some(e)) => format!("FAILED {e}"),
                    (None, None) => "FAILED".to_string(),
                };
                format!("{:>16} {:>16}  {outcome}", c.generator.as_str(), c.hypothesis.as_str())
            })
            .collect();
        return Err(Error::Grid {
            failed,
            total: cells.len(),
            status,
        });
    }
    let rows: Vec<RecommenderKind> = row_idx.iter().map(|&i| config.candidates[i].kind).collect();
    let columns: Vec<RecommenderKind> = col_idx.iter().map(|&i| config.candidates[i].kind).collect();
    let matrix: Vec<Vec<Option<f64>>> = (0..rows.len())
        .map(|ri| (0..columns.len()).map(|ci| cells[ri * columns.len() + ci].0.loss).collect())
        .collect();
    let (identified, accuracy) = summarize(&rows, &columns, &matrix);
    let timings = GridTimings {
        cells: cells.iter().map(|(c, t)| (c.generator, c.hypothesis, *t)).collect(),
        total_seconds: started.elapsed().as_secs_f64(),
    };
    let report = RecognitionReport {
        year,
        rows,
        columns,
        loss_matrix: matrix,
        identified,
        accuracy,
        cells: cells.into_iter().map(|c| c.0).collect(),
        row_info: row_results.into_iter().map(|r| r.0).collect(),
        seeds: SeedsManifest {
            master_seed: config.master_seed,
            rule: "cell seed = derive_seed(master, [tag(\"cell\"), row index, column index]); \
                   row seeds = derive_seed(derive_seed(master, [tag(\"row\"), row index]), [tag(\"synth\" | \"dataset\")]); \
                   indices refer to the full candidate list"
                .into(),
            candidates: config.candidates.iter().map(|c| c.kind).collect(),
        },
        config: config.clone(),
    };
    Ok((report, timings))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowVote {
    pub winner: RecommenderKind,
    pub votes: usize,
    pub tie: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossSeedSummary {
    pub rows: Vec<RecommenderKind>,
    pub columns: Vec<RecommenderKind>,
    pub mean: Vec<Vec<Option<f64>>>,
    /// Population standard deviation over the reports where the cell succeeded.
    pub stddev: Vec<Vec<Option<f64>>>,
    pub majority: Vec<Option<RowVote>>,
    pub reports: usize,
}

impl CrossSeedSummary {
    /// Number of rows whose majority vote names the generator itself. A tied
    /// vote counts as wrong even when the tie-break lands on the generator.
    pub fn correct_rows(&self) -> usize {
        self.rows
            .iter()
            .zip(&self.majority)
            .filter(|(r, v)| v.as_ref().is_some_and(|v| v.winner == **r && !v.tie))
            .count()
    }
}

pub fn cross_seed_summary(reports: &[RecognitionReport]) -> Result<CrossSeedSummary> {
    let first = reports.first().ok_or_else(|| Error::Shape("no reports to summarize".into()))?;
    for r in reports {
        if r.rows != first.rows || r.columns != first.columns {
            return Err(Error::Shape("reports have different candidate axes".into()));
        }
    }
    let (nr, nc) = (first.rows.len(), first.columns.len());
    let mut mean = vec![vec![None; nc]; nr];
    let mut stddev = vec![vec![None; nc]; nr];
    for i in 0..nr {
        for j in 0..nc {
            let vals: Vec<f64> = reports.iter().filter_map(|r| r.loss_matrix[i][j]).collect();
            if vals.is_empty() {
                continue;
            }
            let m = vals.iter().sum::<f64>() / vals.len() as f64;
            let v = vals.iter().map(|x| (x - m).powi(2)).sum::<f64>() / vals.len() as f64;
            mean[i][j] = Some(m);
            stddev[i][j] = Some(v.sqrt());
        }
    }
    let majority = (0..nr)
        .map(|i| {
            let mut votes = vec![0usize; nc];
            for r in reports {
                if let Some(id) = &r.identified[i] {
                    votes[id.index] += 1;
                }
            }
            let top = *votes.iter().max()?;
            if top == 0 {
                return None;
            }
            let index = votes.iter().position(|&v| v == top)?;
            Some(RowVote {
                winner: first.columns[index],
                votes: top,
                tie: votes.iter().filter(|&&v| v == top).count() > 1,
            })
        })
        .collect();
    Ok(CrossSeedSummary {
        rows: first.rows.clone(),
        columns: first.columns.clone(),
        mean,
        stddev,
        majority,
        reports: reports.len(),
    })
}
