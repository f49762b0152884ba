//! Experiment configuration: one TOML file with a section per pipeline stage.

use std::path::{Path, PathBuf};

use infosphere_core::graph::{SynthGraphConfig, Year};
use infosphere_core::model::ModelConfig;
use infosphere_core::recognition::RecognitionConfig;
use infosphere_core::recommenders::{RecommenderConfig, RecommenderKind};
use infosphere_core::synthgen::SynthGenConfig;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsSection {
    pub workdir: PathBuf,
    /// Relative paths resolve against `workdir`.
    pub graph_file: PathBuf,
}

impl Default for PathsSection {
    fn default() -> Self {
        Self {
            workdir: PathBuf::from("work"),
            graph_file: PathBuf::from("graph.txt"),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RnuMode {
    #[default]
    Hindsight,
    Marginalized,
}

/// Model fields sit directly in the section. Parsed by hand because serde's
/// `flatten` would silently accept misspelled model keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "toml::Table")]
pub struct RnuSection {
    pub mode: RnuMode,
    /// Base year y; interactions of y + 1 are the targets. Defaults to the
    /// latest year that still has a successor in the graph.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub year: Option<Year>,
    /// Recommenders averaged over in marginalized mode.
    pub pool: Vec<RecommenderConfig>,
    #[serde(flatten)]
    pub model: ModelConfig,
}

impl Default for RnuSection {
    fn default() -> Self {
        Self {
            mode: RnuMode::Hindsight,
            year: None,
            pool: Vec::new(),
            model: ModelConfig::default(),
        }
    }
}

impl TryFrom<toml::Table> for RnuSection {
    type Error = toml::de::Error;

    fn try_from(mut t: toml::Table) -> std::result::Result<Self, Self::Error> {
        let base = Self::default();
        Ok(Self {
            mode: t.remove("mode").map(|v| v.try_into()).transpose()?.unwrap_or(base.mode),
            year: t.remove("year").map(|v| v.try_into()).transpose()?,
            pool: t.remove("pool").map(|v| v.try_into()).transpose()?.unwrap_or(base.pool),
            model: toml::Value::Table(t).try_into()?,
        })
    }
}

/// The recognition knobs that are not covered by other sections.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RecognitionSection {
    pub include_predictive_as_hypothesis: bool,
    pub holdout_fraction: f64,
    /// Model used for every hypothesis cell; falls back to the rnu model.
    pub model: Option<ModelConfig>,
}

impl Default for RecognitionSection {
    fn default() -> Self {
        let base = RecognitionConfig::default();
        Self {
            include_predictive_as_hypothesis: base.include_predictive_as_hypothesis,
            holdout_fraction: base.holdout_fraction,
            model: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub paths: PathsSection,
    /// Required by `gen-graph` only.
    pub graph: Option<SynthGraphConfig>,
    pub rnu: RnuSection,
    pub candidates: Vec<RecommenderConfig>,
    pub synth: SynthGenConfig,
    pub recognition: RecognitionSection,
    /// Master seeds for `recognize`; one report per seed.
    pub seeds: Vec<u64>,
    pub log_level: String,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            paths: PathsSection::default(),
            graph: None,
            rnu: RnuSection::default(),
            candidates: RecognitionConfig::default().candidates,
            synth: SynthGenConfig::default(),
            recognition: RecognitionSection::default(),
            seeds: vec![0],
            log_level: "info".into(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn graph_path(&self) -> PathBuf {
        self.paths.workdir.join(&self.paths.graph_file)
    }

    pub fn graph_config(&self) -> Result<&SynthGraphConfig> {
        self.graph
            .as_ref()
            .ok_or_else(|| CliError::Config("missing [graph] section".into()))
    }

    /// The candidate entry for `kind`, or its defaults if it is not listed.
    pub fn recommender(&self, kind: RecommenderKind) -> RecommenderConfig {
        self.candidates
            .iter()
            .find(|c| c.kind == kind)
            .cloned()
            .unwrap_or_else(|| RecommenderConfig::of_kind(kind))
    }

    pub fn recognition_config(&self, master_seed: u64) -> RecognitionConfig {
        RecognitionConfig {
            candidates: self.candidates.clone(),
            include_predictive_as_hypothesis: self.recognition.include_predictive_as_hypothesis,
            model: self.recognition.model.clone().unwrap_or_else(|| self.rnu.model.clone()),
            synth: self.synth.clone(),
            master_seed,
            holdout_fraction: self.recognition.holdout_fraction,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rnu_section_takes_model_keys_inline() {
        let cfg = ExperimentConfig::from_toml("[rnu]\nmode = \"marginalized\"\nyear = 2019\nepochs = 7\n").unwrap();
        assert_eq!(cfg.rnu.mode, RnuMode::Marginalized);
        assert_eq!(cfg.rnu.year, Some(2019));
        assert_eq!(cfg.rnu.model.epochs, 7);
        assert_eq!(ExperimentConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn misspelled_model_key_names_the_key() {
        let Err(CliError::Config(msg)) = ExperimentConfig::from_toml("[rnu]\nepoch = 7\n") else {
            panic!("accepted a misspelled key");
        };
        assert!(msg.contains("epoch"), "{msg}");
    }

    #[test]
    fn defaults_survive_an_empty_file() {
        let cfg = ExperimentConfig::from_toml("").unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
        assert_eq!(cfg.rnu.year, None);
        let json = serde_json::to_value(&cfg).unwrap();
        assert!(json["rnu"].get("year").is_none());
    }
}
