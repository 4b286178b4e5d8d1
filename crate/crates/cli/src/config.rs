//! Experiment configuration: a serializable record that fully determines a
//! run. Reports embed its fingerprint so results can be regenerated.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use eebench_core::eval::ExperimentOptions;
use eebench_core::train::TrainConfig;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ExperimentConfig {
    /// Dataset path or `synthetic:<seed>`.
    pub data: String,
    pub out: PathBuf,
    pub seed: u64,
    pub jobs: usize,
    pub signals: Vec<String>,
    pub models: Vec<String>,
    pub epochs: usize,
    pub batch_size: Option<usize>,
    pub learning_rate: Option<f64>,
    pub early_stop_patience: usize,
    pub validation_fraction: f64,
    pub stride: usize,
    pub standardize: bool,
    pub include_rest: bool,
    /// Synthetic data only: subject count, protocol, EE noise sigma.
    pub subjects: u32,
    pub protocol: String,
    pub ee_noise: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            data: "synthetic:7".into(),
            out: PathBuf::from("eebench_out"),
            seed: 7,
            jobs: 1,
            signals: vec!["minute_ventilation".into()],
            models: vec!["linreg".into()],
            epochs: 60,
            batch_size: None,
            learning_rate: None,
            early_stop_patience: 10,
            validation_fraction: 0.15,
            stride: 1,
            standardize: true,
            include_rest: true,
            subjects: 3,
            protocol: "short".into(),
            ee_noise: 0.0,
        }
    }
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            early_stop_patience: self.early_stop_patience,
            seed: self.seed,
            validation_fraction: self.validation_fraction,
        }
    }

    pub fn experiment_options(&self) -> ExperimentOptions {
        ExperimentOptions {
            stride: self.stride,
            include_rest: self.include_rest,
            standardize: self.standardize,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_round_trips_through_json() {
        let cfg = ExperimentConfig {
            signals: vec!["hexoskin".into(), "minute_ventilation".into()],
            models: vec!["cnn".into()],
            ..ExperimentConfig::default()
        };
        let text = serde_json::to_string(&cfg).unwrap();
        let back: ExperimentConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(cfg, back);
    }
}
