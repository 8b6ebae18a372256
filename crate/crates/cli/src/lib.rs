//! Commands behind the `perfcast` binary.

pub mod commands;
pub mod config;

use perfcast::data::DataError;
use perfcast::indicators::IndicatorError;
use perfcast::model::ModelError;

pub use config::{DataSource, ExperimentConfig};

#[derive(Debug)]
pub enum CliError {
    /// Unreadable or malformed input data.
    Input(String),
    Divergence(String),
    Config(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Input(_) => 2,
            CliError::Divergence(_) => 3,
            CliError::Config(_) => 4,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Input(m) => write!(f, "input error: {m}"),
            CliError::Divergence(m) => write!(f, "{m}"),
            CliError::Config(m) => write!(f, "configuration error: {m}"),
        }
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        match e {
            DataError::Split(_) | DataError::NormMismatch { .. } => CliError::Config(e.to_string()),
            DataError::Indicator(IndicatorError::InvalidParam(_)) => CliError::Config(e.to_string()),
            _ => CliError::Input(e.to_string()),
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Divergence { .. } => CliError::Divergence(e.to_string()),
            ModelError::Config(_) | ModelError::Shape(_) => CliError::Config(e.to_string()),
            ModelError::Data(d) => d.into(),
            _ => CliError::Input(e.to_string()),
        }
    }
}

