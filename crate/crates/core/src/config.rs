//! Run configuration shared by every subcommand.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::aesthetics::{RobustnessConfig, ScorerEvalConfig, ScorerTrainConfig};
use crate::baselines::{ImitationConfig, DEFAULT_BUDGET};
use crate::policy::PpoConfig;
use crate::pomdp::EpisodeConfig;
use crate::scene::GenerationConfig;
use crate::VERSION;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub episodes_per_scene: usize,
    /// Pre-capture budget of the greedy and key-frame baselines.
    pub budget: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { episodes_per_scene: 50, budget: DEFAULT_BUDGET }
    }
}

/// Fallback locations used when the matching command-line flag is absent.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathsConfig {
    pub scenes: Option<PathBuf>,
    pub eval_scenes: Option<PathBuf>,
    pub scorer: Option<PathBuf>,
    pub agent: Option<PathBuf>,
    pub imitation: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub scenes: GenerationConfig,
    pub scorer: ScorerTrainConfig,
    pub robustness: RobustnessConfig,
    pub scorer_eval: ScorerEvalConfig,
    pub episode: EpisodeConfig,
    pub ppo: PpoConfig,
    pub imitation: ImitationConfig,
    pub eval: EvalConfig,
    pub paths: PathsConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            scenes: GenerationConfig::default(),
            scorer: ScorerTrainConfig::default(),
            robustness: RobustnessConfig::default(),
            scorer_eval: ScorerEvalConfig::default(),
            episode: EpisodeConfig::default(),
            ppo: PpoConfig::default(),
            imitation: ImitationConfig::default(),
            eval: EvalConfig::default(),
            paths: PathsConfig::default(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("malformed config {path}: {source}")]
    Parse { path: PathBuf, source: serde_json::Error },
    #[error("invalid config: {0}")]
    Invalid(String),
}

impl RunConfig {
    /// Reads a JSON config; unknown keys are errors, missing keys take defaults.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        Self::from_json(&text).map_err(|source| ConfigError::Parse { path: path.to_path_buf(), source })
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let inv = |e: &dyn std::fmt::Display| ConfigError::Invalid(e.to_string());
        self.scenes.validate().map_err(|e| inv(&e))?;
        self.robustness.validate().map_err(|e| inv(&e))?;
        self.episode.validate().map_err(|e| inv(&e))?;
        self.ppo.validate().map_err(|e| inv(&e))?;
        if self.scorer.batch_size == 0 {
            return Err(ConfigError::Invalid("scorer.batch_size must be positive".into()));
        }
        if self.eval.episodes_per_scene == 0 {
            return Err(ConfigError::Invalid("eval.episodes_per_scene must be positive".into()));
        }
        Ok(())
    }

    pub fn to_value(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }

    /// Metadata block embedded in every artifact.
    pub fn artifact_meta(&self) -> serde_json::Value {
        serde_json::json!({ "version": VERSION, "config": self.to_value() })
    }

    /// One-line comment for CSV outputs.
    pub fn csv_comment(&self) -> String {
        format!("{VERSION} config={}", self.to_value())
    }
}
