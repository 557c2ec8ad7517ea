//! Resolution of model and grid settings from defaults, an optional TOML
//! file and command-line flags, in increasing order of precedence.

use std::path::Path;

use anyhow::{Context, Result};
use r2vfl::eval::GridSpec;
use r2vfl::kernel::KernelParams;
use r2vfl::model::Activation;
use r2vfl::weighting::DeltaMode;
use r2vfl::{ModelConfig, Variant};
use serde::Deserialize;

use crate::cli::ModelArgs;
use crate::UsageError;

/// The `[model]` table of a config file. Every key is optional.
#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub variant: Option<Variant>,
    pub hidden_nodes: Option<usize>,
    pub gamma: Option<f64>,
    pub activation: Option<Activation>,
    pub seed: Option<u64>,
    /// RBF width used by the robust weighting.
    pub kernel: Option<f64>,
    pub tau: Option<f64>,
    pub delta: Option<f64>,
    pub delta_quantile: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfigFile {
    pub model: ModelSection,
}

pub fn read_toml<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn delta_mode(absolute: Option<f64>, quantile: Option<f64>) -> Option<DeltaMode> {
    absolute.map(DeltaMode::Absolute).or(quantile.map(DeltaMode::Quantile))
}

fn overlay(cfg: &mut ModelConfig, s: &ModelSection) {
    if let Some(v) = s.hidden_nodes {
        cfg.hidden_nodes = v;
    }
    if let Some(v) = s.gamma {
        cfg.gamma = v;
    }
    if let Some(v) = s.activation {
        cfg.activation = v;
    }
    if let Some(v) = s.seed {
        cfg.seed = v;
    }
    if let Some(v) = s.kernel {
        cfg.weighting.kernel = KernelParams { gamma: v };
    }
    if let Some(v) = s.tau {
        cfg.weighting.tau_multiplier = v;
    }
    if let Some(d) = delta_mode(s.delta, s.delta_quantile) {
        cfg.weighting.delta = d;
    }
}

/// Builds and validates the model configuration. The variant must come from
/// a flag or the config file.
pub fn resolve_model(args: &ModelArgs) -> Result<ModelConfig> {
    let file: ConfigFile = match &args.config {
        Some(path) => read_toml(path)?,
        None => ConfigFile::default(),
    };
    let variant = args
        .variant
        .or(file.model.variant)
        .ok_or_else(|| UsageError("a model variant is required (--variant or [model] variant)".into()))?;
    let mut cfg = ModelConfig::new(variant);
    overlay(&mut cfg, &file.model);
    let flags = ModelSection {
        variant: None,
        hidden_nodes: args.hidden_nodes,
        gamma: args.gamma,
        activation: args.activation,
        seed: args.seed,
        kernel: args.kernel,
        tau: args.tau,
        delta: args.delta,
        delta_quantile: args.delta_quantile,
    };
    overlay(&mut cfg, &flags);
    cfg.validate()?;
    Ok(cfg)
}

/// Grid from an optional file, with `k` and `seed` flag overrides.
pub fn resolve_grid(path: Option<&Path>, k: Option<usize>, seed: Option<u64>) -> Result<GridSpec> {
    let mut grid: GridSpec = match path {
        Some(p) => read_toml(p)?,
        None => GridSpec::default(),
    };
    if let Some(k) = k {
        grid.k = k;
    }
    if let Some(seed) = seed {
        grid.seed = seed;
    }
    grid.validate()?;
    Ok(grid)
}
