//! JSON configuration for the laboratory driver. One document drives every
//! subcommand; flags override individual fields.

use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {0}: {1}")]
    Io(PathBuf, std::io::Error),
    #[error("config is not valid JSON: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("grid_n = {0} must be a power of two >= 64")]
    BadGrid(usize),
    #[error("epsilon_list must be nonempty, positive and strictly decreasing")]
    BadEpsilonList,
    #[error("bubble lambda must be a positive number or the string \"predicted\"")]
    BadLambda,
}

/// Bubble seed scale: an explicit value or the balance-point prediction
/// (3|𝒥|/8ε)^{1/4} computed from the first sweep ε.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LambdaSeed {
    Value(f64),
    Named(PredictedTag),
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub enum PredictedTag {
    #[serde(rename = "predicted")]
    Predicted,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BubbleSeed {
    pub a: [f64; 2],
    pub lambda: LambdaSeed,
}

impl Default for BubbleSeed {
    fn default() -> Self {
        BubbleSeed {
            a: [0.5, 0.5],
            lambda: LambdaSeed::Named(PredictedTag::Predicted),
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct MinimizerConfig {
    pub max_iters: usize,
    pub tol_rel: f64,
    pub log_every: usize,
    /// Measure the descent gradient in the Sobolev metric −Δ + εΔ² + 1;
    /// needed for the nearly-flat scale mode to relax within the budget.
    pub sobolev: bool,
}

impl Default for MinimizerConfig {
    fn default() -> Self {
        MinimizerConfig {
            max_iters: 20_000,
            tol_rel: 1e-3,
            log_every: 500,
            sobolev: true,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct LabConfig {
    pub grid_n: usize,
    pub epsilon_list: Vec<f64>,
    pub bubble: BubbleSeed,
    pub minimizer: MinimizerConfig,
    /// Scales used by the expansion-verification tables.
    pub lambda_list: Vec<f64>,
    pub out_dir: PathBuf,
    pub seed: u64,
}

impl Default for LabConfig {
    fn default() -> Self {
        LabConfig {
            grid_n: 512,
            epsilon_list: vec![1e-4, 5e-5, 2.5e-5],
            bubble: BubbleSeed::default(),
            minimizer: MinimizerConfig::default(),
            lambda_list: vec![8.0, 16.0, 32.0, 64.0],
            out_dir: PathBuf::from("out"),
            seed: 0,
        }
    }
}

impl LabConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| ConfigError::Io(path.to_path_buf(), e))?;
        let config: LabConfig = serde_json::from_str(&text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.grid_n < 64 || !self.grid_n.is_power_of_two() {
            return Err(ConfigError::BadGrid(self.grid_n));
        }
        if self.epsilon_list.is_empty()
            || self.epsilon_list.iter().any(|&e| e <= 0.0)
            || self.epsilon_list.windows(2).any(|w| w[1] >= w[0])
        {
            return Err(ConfigError::BadEpsilonList);
        }
        if let LambdaSeed::Value(v) = self.bubble.lambda {
            if !(v > 0.0) {
                return Err(ConfigError::BadLambda);
            }
        }
        Ok(())
    }
}

/// Full-precision CSV cell: 17 significant digits survive a f64 roundtrip.
pub fn csv_num(v: f64) -> String {
    format!("{v:.16e}")
}
