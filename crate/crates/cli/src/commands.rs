//! One function per subcommand. Each returns the text destined for stdout;
//! artifacts go to the workdir together with a run manifest.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use infosphere_core::graph::{
    generate_synthetic_graph, parse_graph, write_graph, TemporalAcademicGraph, Year,
};
use infosphere_core::model::{train_rnu, train_rnu_marginalized, TrainedUserModel};
use infosphere_core::numerics::{ParamStore, CHECKPOINT_MAGIC};
use infosphere_core::recognition::{
    cross_seed_summary, run_grid, CrossSeedSummary, GridTimings, RecognitionReport,
};
use infosphere_core::recommenders::RecommenderKind;
use infosphere_core::synthgen::{dataset_stats, generate_rhsd, parse_dataset, write_dataset};

use crate::config::{ExperimentConfig, RnuMode};
use crate::error::{CliError, Result};
use crate::manifest::RunManifest;

/// File names inside the workdir.
pub mod artifacts {
    use super::*;

    pub fn rnu_checkpoint(dir: &Path) -> PathBuf {
        dir.join("rnu.ckpt")
    }

    pub fn rnu_manifest(dir: &Path) -> PathBuf {
        dir.join("rnu.json")
    }

    pub fn rhsd(dir: &Path, kind: RecommenderKind) -> PathBuf {
        dir.join(format!("rhsd-{kind}.txt"))
    }

    pub fn report(dir: &Path, seed: u64, ext: &str) -> PathBuf {
        dir.join(format!("report-seed{seed}.{ext}"))
    }

    pub fn timings(dir: &Path, seed: u64) -> PathBuf {
        dir.join(format!("timings-seed{seed}.json"))
    }

    pub fn summary(dir: &Path) -> PathBuf {
        dir.join("summary.json")
    }

    pub fn run_manifest(dir: &Path, command: &str) -> PathBuf {
        dir.join(format!("{command}.manifest.json"))
    }
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

fn load_graph_input(cfg: &ExperimentConfig, manifest: &mut RunManifest) -> Result<TemporalAcademicGraph> {
    let path = cfg.graph_path();
    let graph = parse_graph(&read_text(&path)?).map_err(|e| match e {
        infosphere_core::Error::Parse { line, message } => infosphere_core::Error::Parse {
            line,
            message: format!("{}: {message}", path.display()),
        },
        other => other,
    })?;
    manifest.input(&path)?;
    Ok(graph)
}

fn load_rnu(cfg: &ExperimentConfig, manifest: &mut RunManifest) -> Result<TrainedUserModel> {
    let dir = &cfg.paths.workdir;
    let (ckpt, json) = (artifacts::rnu_checkpoint(dir), artifacts::rnu_manifest(dir));
    for p in [&ckpt, &json] {
        if !p.exists() {
            return Err(CliError::MissingCheckpoint(p.clone()));
        }
    }
    let bytes = std::fs::read(&ckpt).map_err(|e| CliError::io(&ckpt, e))?;
    let model = TrainedUserModel::from_parts(&bytes, &read_text(&json)?)?;
    manifest.input(&ckpt)?;
    manifest.input(&json)?;
    Ok(model)
}

/// Latest base year whose successor year is present in the graph.
pub fn default_year(graph: &TemporalAcademicGraph) -> Result<Year> {
    match graph.year_range() {
        Some((lo, hi)) if hi > lo => Ok(hi - 1),
        _ => Err(CliError::Config("graph needs at least two years of papers".into())),
    }
}

pub fn gen_graph(cfg: &ExperimentConfig) -> Result<String> {
    let gcfg = cfg.graph_config()?;
    let mut manifest = RunManifest::begin("gen-graph", cfg);
    let graph = generate_synthetic_graph(gcfg)?;
    let text = write_graph(&graph);
    manifest.output(&cfg.graph_path(), text.as_bytes())?;
    manifest.finish(&artifacts::run_manifest(&cfg.paths.workdir, "gen-graph"))?;
    Ok(graph_summary(&graph))
}

pub fn train_rnu_cmd(cfg: &ExperimentConfig) -> Result<String> {
    let mut manifest = RunManifest::begin("train-rnu", cfg);
    let graph = load_graph_input(cfg, &mut manifest)?;
    let year = match cfg.rnu.year {
        Some(y) => y,
        None => default_year(&graph)?,
    };
    let model = match cfg.rnu.mode {
        RnuMode::Hindsight => train_rnu(&graph, year, &cfg.rnu.model)?,
        RnuMode::Marginalized => {
            if cfg.rnu.pool.is_empty() {
                return Err(CliError::Config("rnu.mode = marginalized needs a non-empty rnu.pool".into()));
            }
            train_rnu_marginalized(&graph, year, &cfg.rnu.pool, &cfg.rnu.model)?
        }
    };
    let dir = &cfg.paths.workdir;
    manifest.output(&artifacts::rnu_checkpoint(dir), &model.checkpoint_bytes())?;
    manifest.output(&artifacts::rnu_manifest(dir), model.manifest_json().as_bytes())?;
    manifest.finish(&artifacts::run_manifest(dir, "train-rnu"))?;
    Ok(model_summary(&model))
}

pub fn gen_rhsd_cmd(cfg: &ExperimentConfig, kind: RecommenderKind) -> Result<String> {
    let mut manifest = RunManifest::begin("gen-rhsd", cfg);
    let rnu = load_rnu(cfg, &mut manifest)?;
    let graph = load_graph_input(cfg, &mut manifest)?;
    let year = cfg.rnu.year.unwrap_or(rnu.year);
    let ds = generate_rhsd(&rnu, &graph, year, &cfg.recommender(kind), &cfg.synth)?;
    let dir = &cfg.paths.workdir;
    manifest.output(&artifacts::rhsd(dir, kind), write_dataset(&ds).as_bytes())?;
    manifest.finish(&artifacts::run_manifest(dir, &format!("gen-rhsd-{kind}")))?;
    let stats = dataset_stats(&ds.dataset);
    Ok(format!(
        "rhsd {kind} for {}: {}\n",
        ds.dataset.year,
        serde_json::to_string(&stats).expect("stats serialize")
    ))
}

/// Everything `recognize` produced, for callers that want more than text.
#[derive(Debug)]
pub struct RecognizeOutcome {
    pub reports: Vec<RecognitionReport>,
    pub timings: Vec<GridTimings>,
    pub summary: Option<CrossSeedSummary>,
    pub text: String,
}

pub fn recognize_cmd(cfg: &ExperimentConfig) -> Result<RecognizeOutcome> {
    if cfg.seeds.is_empty() {
        return Err(CliError::Config("seeds must list at least one master seed".into()));
    }
    let mut manifest = RunManifest::begin("recognize", cfg);
    let rnu = load_rnu(cfg, &mut manifest)?;
    let graph = load_graph_input(cfg, &mut manifest)?;
    let year = cfg.rnu.year.unwrap_or(rnu.year);
    let dir = &cfg.paths.workdir;
    let mut out = RecognizeOutcome {
        reports: Vec::new(),
        timings: Vec::new(),
        summary: None,
        text: String::new(),
    };
    for &seed in &cfg.seeds {
        let (report, timings) = run_grid(&graph, year, &rnu, &cfg.recognition_config(seed))?;
        tracing::info!(seed, seconds = timings.total_seconds, accuracy = report.accuracy, "grid finished");
        manifest.output(&artifacts::report(dir, seed, "json"), report.to_json().as_bytes())?;
        manifest.output(&artifacts::report(dir, seed, "csv"), report.to_csv().as_bytes())?;
        manifest.output(&artifacts::report(dir, seed, "svg"), report.to_svg().as_bytes())?;
        let tjson = serde_json::to_string_pretty(&timings).expect("timings serialize") + "\n";
        // Timings are not deterministic, so they stay out of the checksummed outputs.
        crate::manifest::write_atomic(&artifacts::timings(dir, seed), tjson.as_bytes())?;
        let _ = writeln!(out.text, "seed {seed}");
        out.text.push_str(&report_matrix(&report));
        out.reports.push(report);
        out.timings.push(timings);
    }
    if out.reports.len() > 1 {
        let summary = cross_seed_summary(&out.reports)?;
        let json = serde_json::to_string_pretty(&summary).expect("summary serializes") + "\n";
        manifest.output(&artifacts::summary(dir), json.as_bytes())?;
        out.text.push_str(&summary_text(&summary));
        out.summary = Some(summary);
    }
    manifest.finish(&artifacts::run_manifest(dir, "recognize"))?;
    Ok(out)
}

pub fn inspect(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    if bytes.starts_with(CHECKPOINT_MAGIC) {
        let store = ParamStore::from_checkpoint(&bytes)?;
        let mut s = format!("checkpoint: {} tensors, {} values\n", store.len(), store.n_coords());
        for p in store.iter() {
            let _ = writeln!(s, "  {:<24} {:?}", p.name, p.shape);
        }
        return Ok(s);
    }
    let unknown = || CliError::UnknownArtifact(path.to_path_buf());
    let text = String::from_utf8(bytes).map_err(|_| unknown())?;
    if text.starts_with("# academic graph") {
        return Ok(graph_summary(&parse_graph(&text)?));
    }
    if text.starts_with("# interaction dataset") {
        let ds = parse_dataset(&text)?;
        let stats = dataset_stats(&ds.dataset);
        return Ok(format!(
            "dataset for {} ({:?})\n{}\n",
            ds.dataset.year,
            ds.dataset.provenance,
            serde_json::to_string_pretty(&stats).expect("stats serialize")
        ));
    }
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|_| unknown())?;
    let has = |k: &str| value.get(k).is_some();
    if has("loss_matrix") {
        return Ok(report_matrix(&RecognitionReport::from_json(&text)?));
    }
    if has("majority") && has("mean") {
        let summary: CrossSeedSummary = serde_json::from_value(value).map_err(|_| unknown())?;
        return Ok(summary_text(&summary));
    }
    if has("artifact_version") {
        let m: RunManifest = serde_json::from_value(value).map_err(|_| unknown())?;
        let stale = m.verify()?;
        let mut s = format!(
            "run manifest: {} ({} inputs, {} outputs)\n",
            m.command,
            m.inputs.len(),
            m.outputs.len()
        );
        for (p, sum) in m.inputs.iter().chain(&m.outputs) {
            let flag = if stale.contains(p) { "CHANGED" } else { "ok" };
            let _ = writeln!(s, "  {flag:<7} {} {p}", &sum[..16]);
        }
        return Ok(s);
    }
    if has("shape") && has("history") {
        let mut s = String::from("model manifest\n");
        for key in ["shape", "year", "config", "recommender_used", "pool_draws"] {
            let _ = writeln!(s, "  {key}: {}", value[key]);
        }
        let hist = value["history"].as_array().map(Vec::len).unwrap_or(0);
        let _ = writeln!(
            s,
            "  history: {hist} epochs, first {} last {}",
            value["history"][0],
            value["history"][hist.saturating_sub(1)]
        );
        return Ok(s);
    }
    Err(unknown())
}

/// Node and edge counts per year plus totals.
pub fn graph_summary(graph: &TemporalAcademicGraph) -> String {
    #[derive(Default)]
    struct YearRow {
        papers: usize,
        writes: usize,
        cites: usize,
        about: usize,
    }
    let mut by_year: BTreeMap<Year, YearRow> = BTreeMap::new();
    let year_of = |p| graph.paper_year(p).expect("paper in graph");
    for p in graph.papers() {
        by_year.entry(year_of(p)).or_default().papers += 1;
    }
    for &(_, p) in graph.writes_edges() {
        by_year.entry(year_of(p)).or_default().writes += 1;
    }
    for &(c, _) in graph.cites_edges() {
        by_year.entry(year_of(c)).or_default().cites += 1;
    }
    for &(p, _) in graph.about_edges() {
        by_year.entry(year_of(p)).or_default().about += 1;
    }
    let mut s = format!(
        "graph: {} authors, {} papers, {} topics, {} writes, {} cites, {} about\n",
        graph.n_authors(),
        graph.n_papers(),
        graph.n_topics(),
        graph.writes_edges().len(),
        graph.cites_edges().len(),
        graph.about_edges().len()
    );
    let _ = writeln!(s, "{:>6} {:>7} {:>8} {:>7} {:>7} {:>7}", "year", "papers", "authors", "writes", "cites", "about");
    for (y, r) in &by_year {
        let _ = writeln!(
            s,
            "{y:>6} {:>7} {:>8} {:>7} {:>7} {:>7}",
            r.papers,
            graph.active_authors(*y).len(),
            r.writes,
            r.cites,
            r.about
        );
    }
    s
}

fn model_summary(model: &TrainedUserModel) -> String {
    let first = model.history.first().copied().unwrap_or(f64::NAN);
    let last = model.history.last().copied().unwrap_or(f64::NAN);
    format!(
        "rnu for base year {}: {} epochs, loss {first:.4} -> {last:.4}, fingerprint {:016x}\n",
        model.year,
        model.history.len(),
        model.fingerprint()
    )
}

/// Loss matrix with each row's minimum starred.
pub fn report_matrix(report: &RecognitionReport) -> String {
    let mut s = format!("{:>16}", "generator");
    for c in &report.columns {
        let _ = write!(s, " {:>16}", c.as_str());
    }
    s.push('\n');
    for ((r, row), id) in report.rows.iter().zip(&report.loss_matrix).zip(&report.identified) {
        let _ = write!(s, "{:>16}", r.as_str());
        for (c, v) in report.columns.iter().zip(row) {
            let star = if id.as_ref().is_some_and(|id| id.winner == *c) { "*" } else { " " };
            match v {
                Some(v) => {
                    let _ = write!(s, " {:>15.5}{star}", v);
                }
                None => {
                    let _ = write!(s, " {:>16}", "failed");
                }
            }
        }
        s.push('\n');
    }
    let _ = writeln!(s, "accuracy {:.3}", report.accuracy);
    s
}

fn summary_text(summary: &CrossSeedSummary) -> String {
    let mut s = format!("summary over {} seeds\n", summary.reports);
    for (r, vote) in summary.rows.iter().zip(&summary.majority) {
        match vote {
            Some(v) => {
                let tie = if v.tie { " (tie)" } else { "" };
                let _ = writeln!(s, "{:>16} -> {} ({} votes){tie}", r.as_str(), v.winner, v.votes);
            }
            None => {
                let _ = writeln!(s, "{:>16} -> none", r.as_str());
            }
        }
    }
    let _ = writeln!(s, "correct rows {}/{}", summary.correct_rows(), summary.rows.len());
    s
}
