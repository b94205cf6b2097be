//! Run configuration files.
//!
//! Configs are JSON. Only `task` is required; everything else falls back to
//! the full-scale defaults below. `RunConfig::desk` shrinks the run to
//! something a single CPU finishes in minutes.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::acquisition::{self, AcquisitionConfig, AcquisitionMode, Selection};
use crate::diffusion::{ModelConfig, TrainConfig};
use crate::optimizer::{LoopConfig, NormalizerPolicy};
use crate::tasks::TaskSpec;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub task: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "defaults::iterations")]
    pub iterations: usize,
    #[serde(default = "defaults::batch")]
    pub batch: usize,
    #[serde(default = "defaults::ensemble")]
    pub ensemble: usize,
    #[serde(default = "defaults::weights")]
    pub weights: Vec<f64>,
    #[serde(default = "defaults::guidance")]
    pub guidance: f64,
    #[serde(default = "defaults::mode")]
    pub acquisition_mode: AcquisitionMode,
    #[serde(default = "defaults::epsilon_floor")]
    pub epsilon_floor: f64,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub model: ModelConfig,
    /// Percentile slice `(lo, hi)` of the initial pool kept as the starting data.
    #[serde(default = "defaults::slice")]
    pub slice: (f64, f64),
    /// Number of random designs the percentile slice is taken from.
    #[serde(default = "defaults::pool_size")]
    pub pool_size: usize,
    #[serde(default = "defaults::normalizer")]
    pub normalizer: NormalizerPolicy,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

mod defaults {
    use super::*;

    pub fn iterations() -> usize {
        16
    }
    pub fn batch() -> usize {
        100
    }
    pub fn ensemble() -> usize {
        5
    }
    pub fn weights() -> Vec<f64> {
        acquisition::DEFAULT_WEIGHTS.to_vec()
    }
    pub fn guidance() -> f64 {
        2.0
    }
    pub fn mode() -> AcquisitionMode {
        AcquisitionMode::Log
    }
    pub fn epsilon_floor() -> f64 {
        AcquisitionConfig::default().epsilon_floor
    }
    pub fn slice() -> (f64, f64) {
        (0.25, 0.5)
    }
    pub fn pool_size() -> usize {
        1000
    }
    pub fn normalizer() -> NormalizerPolicy {
        NormalizerPolicy::Refit
    }
}

/// Epochs per ensemble retrain under the desk preset.
pub const DESK_EPOCHS: usize = 200;
pub const DESK_POOL_SIZE: usize = 400;

impl RunConfig {
    /// Full-scale defaults for `task`.
    pub fn new(task: impl Into<String>) -> Self {
        Self {
            task: task.into(),
            seed: 0,
            iterations: defaults::iterations(),
            batch: defaults::batch(),
            ensemble: defaults::ensemble(),
            weights: defaults::weights(),
            guidance: defaults::guidance(),
            acquisition_mode: defaults::mode(),
            epsilon_floor: defaults::epsilon_floor(),
            train: TrainConfig::default(),
            model: ModelConfig::default(),
            slice: defaults::slice(),
            pool_size: defaults::pool_size(),
            normalizer: defaults::normalizer(),
            output: None,
        }
    }

    /// Desk preset: K=16, N=20, M=3, T=50, hidden width 64.
    pub fn desk(mut self) -> Self {
        self.iterations = 16;
        self.batch = 20;
        self.ensemble = 3;
        self.model = ModelConfig::desk();
        self.train = TrainConfig {
            epochs: DESK_EPOCHS,
            ..TrainConfig::desk()
        };
        self.pool_size = DESK_POOL_SIZE;
        self
    }

    pub fn validate(&self) -> Result<()> {
        TaskSpec::by_name(&self.task)?;
        for (name, v) in [
            ("iterations", self.iterations),
            ("batch", self.batch),
            ("ensemble", self.ensemble),
            ("pool_size", self.pool_size),
        ] {
            if v == 0 {
                return Err(Error::invalid(format!("{name} must be positive")));
            }
        }
        if self.ensemble < 2 {
            return Err(Error::invalid("ensemble needs at least 2 members"));
        }
        if self.weights.is_empty() || self.weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::invalid("weights must be a non-empty list of finite numbers"));
        }
        if !self.guidance.is_finite() || self.guidance < 0.0 {
            return Err(Error::invalid(format!("guidance {} must be >= 0", self.guidance)));
        }
        let (lo, hi) = self.slice;
        if !(0.0 <= lo && lo < hi && hi <= 1.0) {
            return Err(Error::invalid(format!("slice ({lo}, {hi}) must satisfy 0 <= lo < hi <= 1")));
        }
        self.train.validate()
    }

    pub fn task_spec(&self) -> Result<TaskSpec> {
        TaskSpec::by_name(&self.task)
    }

    /// Loop settings for a given candidate selection rule.
    pub fn loop_config(&self, selection: Selection) -> LoopConfig {
        LoopConfig {
            iterations: self.iterations,
            batch: self.batch,
            ensemble: self.ensemble,
            weights: self.weights.clone(),
            guidance: self.guidance,
            acquisition: AcquisitionConfig {
                mode: self.acquisition_mode,
                epsilon_floor: self.epsilon_floor,
                selection,
            },
            train: self.train.clone(),
            model: self.model.clone(),
            normalizer: self.normalizer,
        }
    }
}

/// Reads and validates a config file.
pub fn parse_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let config: RunConfig = serde_json::from_str(&text).map_err(|e| Error::Config {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    config.validate()?;
    Ok(config)
}

pub fn write_config(path: &Path, config: &RunConfig) -> Result<()> {
    let text = serde_json::to_string_pretty(config)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
