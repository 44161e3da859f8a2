use std::fs;
use std::path::Path;

use anyhow::Context;
use serde::{Deserialize, Serialize};
use typoprobe::analysis::TsneConfig;
use typoprobe::probe::ProbeConfig;

use crate::UsageError;

/// Settings shared by every subcommand. Loaded from TOML, then overridden by flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub seed: u64,
    pub min_langs: usize,
    pub sentences_per_language: usize,
    pub val_fraction: f64,
    pub val_from: String,
    /// 0 = one worker per core
    pub workers: usize,
    pub probe: ProbeConfig,
    pub tsne: TsneConfig,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            seed: 0,
            min_langs: 4,
            sentences_per_language: 10_000,
            val_fraction: 0.1,
            val_from: "test".into(),
            workers: 0,
            probe: ProbeConfig::default(),
            tsne: TsneConfig::default(),
        }
    }
}

impl Config {
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        let Some(path) = path else {
            return Ok(Config::default());
        };
        let text = fs::read_to_string(path)
            .map_err(|e| UsageError(format!("cannot read config {}: {e}", path.display())))?;
        let config: Config = toml::from_str(&text)
            .map_err(|e| UsageError(format!("bad config {}: {e}", path.display())))?;
        config.probe.validate().context("probe settings")?;
        Ok(config)
    }
}
