//! Experiment configuration: one TOML file drives the whole pipeline.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chat::{CorruptionParams, LiveConfig, ModelLimits, RetryPolicy};
use crate::folds::DEFAULT_SAFETY_MARGIN;
use crate::prompt::PromptSetting;
use crate::score::MatchConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub name: String,
    pub path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub name: String,
    #[serde(default = "default_context_window")]
    pub context_window: usize,
    #[serde(default)]
    pub temperature_min: f64,
    #[serde(default = "default_temperature_max")]
    pub temperature_max: f64,
}

fn default_context_window() -> usize {
    4096
}

fn default_temperature_max() -> f64 {
    2.0
}

impl ModelConfig {
    pub fn limits(&self) -> ModelLimits {
        ModelLimits {
            context_window: self.context_window,
            temperature_min: self.temperature_min,
            temperature_max: self.temperature_max,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackendSpec {
    Live {
        #[serde(flatten)]
        http: LiveConfig,
        #[serde(default)]
        retry: RetryPolicy,
    },
    Replay {
        #[serde(default)]
        corruption: CorruptionParams,
    },
}

impl Default for BackendSpec {
    fn default() -> Self {
        BackendSpec::Replay {
            corruption: CorruptionParams::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Seeds {
    #[serde(default)]
    pub fold: u64,
    #[serde(default)]
    pub schedule: u64,
    /// Reseed the fold plan per run instead of reusing one plan.
    #[serde(default)]
    pub per_run_fold_reseed: bool,
}

impl Default for Seeds {
    fn default() -> Self {
        Self {
            fold: 0,
            schedule: 0,
            per_run_fold_reseed: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BudgetConfig {
    #[serde(default = "default_allowance")]
    pub per_sentence_output_allowance: usize,
    #[serde(default = "default_margin")]
    pub safety_margin: f64,
    /// Overrides the derived max_tokens (window minus prompt estimate
    /// minus margin) when set.
    #[serde(default)]
    pub max_tokens: Option<usize>,
}

fn default_allowance() -> usize {
    30
}

fn default_margin() -> f64 {
    DEFAULT_SAFETY_MARGIN
}

impl Default for BudgetConfig {
    fn default() -> Self {
        Self {
            per_sentence_output_allowance: default_allowance(),
            safety_margin: default_margin(),
            max_tokens: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DictionaryScope {
    #[default]
    WholeCorpus,
    PerFold,
}

/// Caps applied to temperature sweeps on top of the model ranges.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    #[serde(default)]
    pub cap_min: f64,
    #[serde(default = "default_cap_max")]
    pub cap_max: f64,
}

fn default_cap_max() -> f64 {
    1.0
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            cap_min: 0.0,
            cap_max: default_cap_max(),
        }
    }
}

/// The default sweep grid.
pub const DEFAULT_TEMPERATURE_GRID: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    #[serde(default)]
    pub run_id: Option<String>,
    pub datasets: Vec<DatasetConfig>,
    pub models: Vec<ModelConfig>,
    #[serde(default = "default_settings")]
    pub settings: Vec<PromptSetting>,
    #[serde(default = "default_temperatures")]
    pub temperatures: Vec<f64>,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default = "default_runs")]
    pub runs: u32,
    #[serde(default)]
    pub seeds: Seeds,
    #[serde(default)]
    pub backend: BackendSpec,
    #[serde(default)]
    pub budgets: BudgetConfig,
    #[serde(default)]
    pub match_config: MatchConfig,
    #[serde(default)]
    pub dictionary_scope: DictionaryScope,
    #[serde(default)]
    pub sweep: SweepConfig,
    #[serde(default = "default_workers")]
    pub workers: usize,
    pub output_root: PathBuf,
    /// Optional variation-library files overriding the bundled templates.
    #[serde(default)]
    pub base_library: Option<PathBuf>,
    #[serde(default)]
    pub masked_library: Option<PathBuf>,
}

fn default_settings() -> Vec<PromptSetting> {
    PromptSetting::ALL.to_vec()
}

fn default_temperatures() -> Vec<f64> {
    vec![0.0]
}

fn default_k() -> usize {
    10
}

fn default_runs() -> u32 {
    10
}

fn default_workers() -> usize {
    4
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("failed to read config {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("failed to parse config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config:\n{}", .0.join("\n"))]
    Invalid(Vec<String>),
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(text)?)
    }

    pub fn from_toml_path(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    /// Pre-flight validation with no side effects; collects every problem.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut problems = Vec::new();
        if self.datasets.is_empty() {
            problems.push("no datasets configured".to_string());
        }
        for ds in &self.datasets {
            if !ds.path.exists() {
                problems.push(format!("dataset {}: {} does not exist", ds.name, ds.path.display()));
            }
        }
        if self.models.is_empty() {
            problems.push("no models configured".to_string());
        }
        if self.settings.is_empty() {
            problems.push("no settings configured".to_string());
        }
        if self.temperatures.is_empty() {
            problems.push("no temperatures configured".to_string());
        }
        for model in &self.models {
            for &t in &self.temperatures {
                if t < model.temperature_min || t > model.temperature_max {
                    problems.push(format!(
                        "temperature {t} outside {}'s range [{}, {}]",
                        model.name, model.temperature_min, model.temperature_max
                    ));
                }
            }
        }
        if self.k < 2 {
            problems.push(format!("k = {} must be at least 2", self.k));
        }
        if self.runs == 0 {
            problems.push("runs must be at least 1".to_string());
        }
        if self.workers == 0 {
            problems.push("workers must be at least 1".to_string());
        }
        if !(0.0..1.0).contains(&self.budgets.safety_margin) {
            problems.push(format!(
                "safety_margin {} outside [0, 1)",
                self.budgets.safety_margin
            ));
        }
        if let BackendSpec::Replay { corruption } = &self.backend {
            if let Err(msg) = corruption.validate() {
                problems.push(msg);
            }
        }
        for library in [&self.base_library, &self.masked_library].into_iter().flatten() {
            if !library.exists() {
                problems.push(format!("library file {} does not exist", library.display()));
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Invalid(problems))
        }
    }

    /// Validates a sweep grid against model ranges and the sweep cap.
    pub fn validate_sweep_grid(&self, grid: &[f64]) -> Result<(), ConfigError> {
        let mut problems = Vec::new();
        if grid.is_empty() {
            problems.push("empty temperature grid".to_string());
        }
        for &t in grid {
            if t < self.sweep.cap_min || t > self.sweep.cap_max {
                problems.push(format!(
                    "temperature {t} outside the sweep cap [{}, {}]",
                    self.sweep.cap_min, self.sweep.cap_max
                ));
            }
            for model in &self.models {
                if t < model.temperature_min || t > model.temperature_max {
                    problems.push(format!(
                        "temperature {t} outside {}'s range [{}, {}]",
                        model.name, model.temperature_min, model.temperature_max
                    ));
                }
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Invalid(problems))
        }
    }

    pub fn fold_seed_for_run(&self, run: u32) -> u64 {
        if self.seeds.per_run_fold_reseed {
            self.seeds.fold.wrapping_add(run as u64)
        } else {
            self.seeds.fold
        }
    }
}
