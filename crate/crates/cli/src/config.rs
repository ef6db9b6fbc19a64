//! TOML run configuration. Every section is optional; command-line flags
//! override individual fields.

use std::path::{Path, PathBuf};

use lob_uncertainty::dataset::{DataConfig, Split};
use lob_uncertainty::neuralnet::{ModelConfig, TrainConfig};
use lob_uncertainty::strategy::{StrategyConfig, StrategyKind};
use lob_uncertainty::synthgen::SynthConfig;
use serde::Deserialize;

use crate::UsageError;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub data_dir: Option<PathBuf>,
    pub synth: Option<SynthConfig>,
    pub data: DataConfig,
    pub model: Option<ModelConfig>,
    pub train: TrainConfig,
    pub strategy: Option<StrategyConfig>,
    pub backtest: BacktestSection,
    pub sweep: SweepSection,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BacktestSection {
    /// Value of one price tick in GBX.
    pub tick_gbx: f64,
    /// Which days to trade.
    pub split: Split,
}

impl Default for BacktestSection {
    fn default() -> Self {
        Self {
            tick_gbx: 1.0,
            split: Split::Test,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub alphas: Vec<f64>,
    pub beta2s: Vec<f64>,
    pub beta1: f64,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            alphas: vec![0.6, 0.7, 0.8, 0.9],
            beta2s: vec![0.5, 0.7, 0.9],
            beta1: 0.1,
        }
    }
}

impl FileConfig {
    /// Reads `path`; a missing or malformed file is a usage error.
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| UsageError(format!("cannot read config {}: {e}", path.display())))?;
        let cfg: FileConfig =
            toml::from_str(&text).map_err(|e| UsageError(format!("invalid config {}: {e}", path.display())))?;
        Ok(cfg)
    }

    pub fn load_opt(path: Option<&Path>) -> anyhow::Result<Self> {
        match path {
            Some(p) => Self::load(p),
            None => Ok(Self::default()),
        }
    }

    pub fn model(&self) -> ModelConfig {
        self.model.clone().unwrap_or_default()
    }

    pub fn strategy(&self) -> StrategyConfig {
        self.strategy
            .clone()
            .unwrap_or_else(|| StrategyConfig::new(StrategyKind::Bayesian))
    }
}
