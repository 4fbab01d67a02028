use std::path::{Path, PathBuf};

use rdr_core::estimator::{Mode, TrainConfig};
use rdr_core::network::AdamConfig;
use serde::Deserialize;

use crate::error::{data, CliError};
use crate::manifest::read_string;

/// Configuration schema versions this binary reads.
pub const SCHEMA_VERSIONS: &[&str] = &["1"];

pub const SEED_ENV: &str = "RDR_SEED";

/// JSON run configuration: training settings plus optional input paths.
/// Paths are relative to the working directory.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: String,
    pub mode: Option<Mode>,
    pub alpha: Option<f64>,
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub seed: Option<u64>,
    pub hidden_widths: Option<Vec<usize>>,
    pub optimizer: Option<AdamConfig>,
    pub holdout_fraction: Option<f64>,
    pub standardize: Option<bool>,
    pub histogram_bins: Option<usize>,
    pub p: Option<PathBuf>,
    pub q: Option<Vec<PathBuf>>,
}

impl RunConfig {
    pub fn parse(text: &str, origin: &str) -> Result<Self, CliError> {
        let cfg: RunConfig = serde_json::from_str(text)
            .map_err(|e| data(format!("{origin}: invalid run configuration: {e}")))?;
        if !SCHEMA_VERSIONS.contains(&cfg.schema_version.as_str()) {
            return Err(data(format!(
                "{origin}: unsupported schema_version {:?} (supported: {})",
                cfg.schema_version,
                SCHEMA_VERSIONS.join(", ")
            )));
        }
        Ok(cfg)
    }

    pub fn load(path: Option<&Path>) -> Result<(Self, Option<String>), CliError> {
        match path {
            Some(p) => {
                let text = read_string(p)?;
                Ok((Self::parse(&text, &p.display().to_string())?, Some(text)))
            }
            None => Ok((RunConfig::default(), None)),
        }
    }

    /// Training settings with defaults filled in; the seed is resolved separately.
    pub fn train_config(&self) -> TrainConfig {
        let d = TrainConfig::default();
        TrainConfig {
            mode: self.mode.unwrap_or(d.mode),
            alpha: self.alpha.unwrap_or(d.alpha),
            epochs: self.epochs.unwrap_or(d.epochs),
            batch_size: self.batch_size.unwrap_or(d.batch_size),
            seed: d.seed,
            hidden_widths: self.hidden_widths.clone().unwrap_or(d.hidden_widths),
            optimizer: self.optimizer.unwrap_or(d.optimizer),
            holdout_fraction: self.holdout_fraction.unwrap_or(d.holdout_fraction),
            standardize: self.standardize.unwrap_or(d.standardize),
        }
    }
}

/// Flag, then config file, then `RDR_SEED`, then 0.
pub fn resolve_seed(flag: Option<u64>, config: Option<u64>) -> Result<u64, CliError> {
    if let Some(s) = flag.or(config) {
        return Ok(s);
    }
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| CliError::Usage(format!("{SEED_ENV}={v:?} is not an unsigned integer"))),
        Err(_) => Ok(0),
    }
}
