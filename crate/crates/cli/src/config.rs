//! Run configuration files.

use std::fs;
use std::path::Path;

use ltae_core::optim::OptimizerKind;
use ltae_core::train::TrainSettings;
use ltae_core::PipelineConfig;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

/// `train` section of a run configuration. The seed lives at the top level
/// so that initialization and shuffling share it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_learning_rate")]
    pub learning_rate: f64,
    #[serde(default)]
    pub optimizer: OptimizerKind,
    #[serde(default = "default_folds")]
    pub folds: usize,
}

fn default_epochs() -> usize {
    30
}

fn default_batch_size() -> usize {
    32
}

fn default_learning_rate() -> f64 {
    1e-3
}

fn default_folds() -> usize {
    1
}

impl Default for TrainSection {
    fn default() -> Self {
        Self {
            epochs: default_epochs(),
            batch_size: default_batch_size(),
            learning_rate: default_learning_rate(),
            optimizer: OptimizerKind::default(),
            folds: default_folds(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    pub model: PipelineConfig,
    #[serde(default)]
    pub train: TrainSection,
}

/// Command-line values that replace file values when present.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub learning_rate: Option<f64>,
    pub folds: Option<usize>,
}

impl RunConfig {
    pub fn apply(&mut self, o: &Overrides) {
        if let Some(v) = o.seed {
            self.seed = v;
        }
        if let Some(v) = o.epochs {
            self.train.epochs = v;
        }
        if let Some(v) = o.batch_size {
            self.train.batch_size = v;
        }
        if let Some(v) = o.learning_rate {
            self.train.learning_rate = v;
        }
        if let Some(v) = o.folds {
            self.train.folds = v;
        }
    }

    pub fn settings(&self) -> TrainSettings {
        TrainSettings {
            epochs: self.train.epochs,
            batch_size: self.train.batch_size,
            learning_rate: self.train.learning_rate,
            optimizer: self.train.optimizer,
            seed: self.seed,
            folds: self.train.folds,
        }
    }

    pub fn validate(&self) -> CliResult<()> {
        self.model.validate()?;
        self.settings().validate()?;
        Ok(())
    }
}

pub fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

/// Parses a TOML file; an unreadable file counts as a configuration error.
pub fn load_toml<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path).map_err(|e| {
        CliError::config("unreadable_config_file", format!("{}: {e}", path.display()))
    })?;
    toml::from_str(&text).map_err(|e| {
        CliError::config(
            "invalid_config_file",
            format!("{}: {}", path.display(), e.message()),
        )
    })
}
