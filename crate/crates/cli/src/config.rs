//! Experiment configuration file.

use std::path::{Path, PathBuf};

use perfcast::data::SplitFractions;
use perfcast::indicators::IndicatorParams;
use perfcast::model::{ModelSpec, TrainParams};
use perfcast::series::Interval;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSource {
    /// CSV path; relative paths are resolved against the config file.
    pub path: PathBuf,
    pub interval: Interval,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub data: DataSource,
    #[serde(default)]
    pub indicators: IndicatorParams,
    #[serde(default)]
    pub model: ModelSpec,
    #[serde(default)]
    pub train: TrainParams,
    #[serde(default)]
    pub split: SplitFractions,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<ExperimentConfig, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Reads a config file and resolves its relative paths against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<ExperimentConfig, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_json(&text).map_err(|e| match e {
            CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.data.path = base.join(&cfg.data.path);
        cfg.out_dir = base.join(&cfg.out_dir);
        Ok(cfg)
    }

    /// Applies the run seed to every seeded component of the model.
    pub fn with_seed(mut self, seed: Option<u64>) -> ExperimentConfig {
        if let Some(s) = seed {
            self.seed = s;
        }
        self.model.seed = self.seed;
        if let Some(f) = self.model.favor.as_mut() {
            f.seed = self.seed;
        }
        self
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.indicators.validate().map_err(|e| CliError::Config(e.to_string()))?;
        self.model.validate().map_err(|e| CliError::Config(e.to_string()))?;
        self.train.validate().map_err(|e| CliError::Config(e.to_string()))?;
        self.split.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(())
    }
}
