use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use scam_radar::classifier::Hyperparams;
use scam_radar::model::{Asset, ValuableTokens};
use scam_radar::pipeline::DetectConfig;

pub const SEED_ENV: &str = "SCAM_RADAR_SEED";

/// Bad flags, config values or generator settings; exits with status 2.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

pub fn config_err(msg: impl Into<String>) -> anyhow::Error {
    ConfigError(msg.into()).into()
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassifierSection {
    pub n_trees: Option<usize>,
    pub max_depth: Option<usize>,
    pub min_leaf: Option<usize>,
    pub features_per_split: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThresholdSection {
    pub drain_fraction: Option<f64>,
    pub min_group: Option<usize>,
    pub min_occurrences: Option<usize>,
}

/// Contents of the `--config` TOML file. Every key is optional; flags win.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
    pub data: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub valuable_tokens: Option<Vec<String>>,
    #[serde(default)]
    pub classifier: ClassifierSection,
    #[serde(default)]
    pub thresholds: ThresholdSection,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = fs::read_to_string(path)
            .map_err(|e| config_err(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| config_err(format!("config {}: {e}", path.display())))
    }
}

/// Flag, then config file, then `SCAM_RADAR_SEED`, then 0.
pub fn resolve_seed(flag: Option<u64>, file: &FileConfig) -> anyhow::Result<u64> {
    if let Some(s) = flag.or(file.seed) {
        return Ok(s);
    }
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| config_err(format!("{SEED_ENV}={v:?} is not an unsigned integer"))),
        Err(_) => Ok(0),
    }
}

/// Resolves a path from a flag or the config file.
pub fn resolve_path(flag: Option<PathBuf>, file: &Option<PathBuf>, what: &str) -> anyhow::Result<PathBuf> {
    flag.or_else(|| file.clone())
        .ok_or_else(|| config_err(format!("missing --{what} (flag or config key `{what}`)")))
}

#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub trees: Option<usize>,
    pub max_depth: Option<usize>,
    pub drain_fraction: Option<f64>,
    pub min_group: Option<usize>,
    pub min_occurrences: Option<usize>,
}

pub fn hyperparams(file: &FileConfig, o: &Overrides) -> anyhow::Result<Hyperparams> {
    let d = Hyperparams::default();
    let c = &file.classifier;
    let hp = Hyperparams {
        n_trees: o.trees.or(c.n_trees).unwrap_or(d.n_trees),
        max_depth: o.max_depth.or(c.max_depth).or(d.max_depth),
        min_leaf: c.min_leaf.unwrap_or(d.min_leaf),
        features_per_split: c.features_per_split.unwrap_or(d.features_per_split),
    };
    if hp.n_trees == 0 || hp.min_leaf == 0 || hp.max_depth == Some(0) {
        return Err(config_err("n_trees, min_leaf and max_depth must be positive"));
    }
    if !(1..=scam_radar::features::FEATURE_COUNT).contains(&hp.features_per_split) {
        return Err(config_err(format!(
            "features_per_split must lie in 1..={}",
            scam_radar::features::FEATURE_COUNT
        )));
    }
    Ok(hp)
}

pub fn detect_config(file: &FileConfig, o: &Overrides, seed: u64) -> anyhow::Result<DetectConfig> {
    let d = DetectConfig::default();
    let t = &file.thresholds;
    let valuable = match &file.valuable_tokens {
        None => d.valuable,
        Some(list) => {
            let assets = list
                .iter()
                .map(|s| s.parse::<Asset>().map_err(|e| config_err(format!("valuable_tokens: {e}"))))
                .collect::<anyhow::Result<Vec<_>>>()?;
            if assets.is_empty() {
                return Err(config_err("valuable_tokens must not be empty"));
            }
            ValuableTokens::new(assets)
        }
    };
    let cfg = DetectConfig {
        valuable,
        hyperparams: hyperparams(file, o)?,
        drain_fraction: o.drain_fraction.or(t.drain_fraction).unwrap_or(d.drain_fraction),
        min_group: o.min_group.or(t.min_group).unwrap_or(d.min_group),
        min_occurrences: o.min_occurrences.or(t.min_occurrences).unwrap_or(d.min_occurrences),
        seed,
    };
    if !(cfg.drain_fraction > 0.0 && cfg.drain_fraction <= 1.0) {
        return Err(config_err("drain_fraction must lie in (0, 1]"));
    }
    if cfg.min_group < 2 {
        return Err(config_err("min_group must be at least 2"));
    }
    if cfg.min_occurrences < 2 {
        return Err(config_err("min_occurrences must be at least 2"));
    }
    Ok(cfg)
}
