//! The run-configuration file shared by every subcommand.
//!
//! A configuration is one JSON object; each subcommand reads the sections
//! it needs and rejects files with unknown keys. Relative `path` entries
//! are resolved against the directory containing the configuration file,
//! so a generated bundle (see `synth`) stays relocatable.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use terracarbon::tuning::SearchGrid;

/// Version stamped on JSON files the CLI itself defines (stack manifests,
/// selection reports, generated configurations).
pub const OUTPUT_VERSION: u32 = 1;

/// One raster input: where it lives, the band name it contributes to the
/// stack, and whether it is a predictor or a target layer.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputEntry {
    pub path: String,
    pub name: String,
    pub role: String,
}

/// Reference geometry every input is resampled onto.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Reference {
    pub origin_x: f64,
    pub origin_y: f64,
    pub pixel_w: f64,
    pub pixel_h: f64,
    pub width: usize,
    pub height: usize,
    pub crs: String,
}

/// Model selection and tuning inputs for `dataset`, `select`, `train` and
/// `evaluate`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// Registry name (A–H).
    pub spec: String,
    /// "AGB" or "SOC".
    pub target: String,
    /// "RF", "BRT" or "XGB".
    pub technique: String,
    /// Hyper-parameter grid for `train`; omitted = the technique's
    /// documented default grid.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<SearchGrid>,
    /// Full parameter block for `evaluate` (one grid point, e.g. the
    /// `best_params` object of an earlier report).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<serde_json::Value>,
    /// Mandatory for train/evaluate unless `--seed` is given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Cross-validation folds; omitted = 5.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
}

/// Thresholds for `select`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelectionConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vif_threshold: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_threshold: Option<f64>,
}

/// Geometry and seed for `synth`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneConfig {
    #[serde(default = "default_scene_extent")]
    pub width: usize,
    #[serde(default = "default_scene_extent")]
    pub height: usize,
    #[serde(default = "default_scene_border")]
    pub border: usize,
    /// Mandatory unless `--seed` is given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

fn default_scene_extent() -> usize {
    64
}

fn default_scene_border() -> usize {
    2
}

impl Default for SceneConfig {
    fn default() -> SceneConfig {
        SceneConfig {
            width: default_scene_extent(),
            height: default_scene_extent(),
            border: default_scene_border(),
            seed: None,
        }
    }
}

/// Trained-model inputs and unit multipliers for `map`. At least one model
/// is required; the multipliers (default 1.0) harmonize units before the
/// two layers are summed into the total-carbon surface.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub agb_model: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub soc_model: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub agb_multiplier: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub soc_multiplier: Option<f64>,
}

/// Report files for `compare`: every candidate is set against the one
/// baseline.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareConfig {
    pub baseline: String,
    pub candidates: Vec<String>,
}

/// The whole configuration file. Sections are optional here; each
/// subcommand demands the ones it needs by name.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub version: Option<u32>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub inputs: Vec<InputEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<Reference>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub selection: Option<SelectionConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scene: Option<SceneConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub map: Option<MapConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub compare: Option<CompareConfig>,
}

/// A parsed configuration plus the directory its relative paths resolve
/// against.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: Config,
    base_dir: PathBuf,
}

impl LoadedConfig {
    pub fn read(path: &Path) -> Result<LoadedConfig> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        let config: Config = serde_json::from_str(&text)
            .with_context(|| format!("config {} is not valid", path.display()))?;
        for (i, entry) in config.inputs.iter().enumerate() {
            if entry.role != "predictor" && entry.role != "target" {
                bail!(
                    "config key inputs[{i}].role: {:?} is neither \"predictor\" nor \"target\"",
                    entry.role
                );
            }
        }
        let base_dir = path.parent().unwrap_or_else(|| Path::new(".")).to_path_buf();
        Ok(LoadedConfig { config, base_dir })
    }

    /// Resolve a path from the configuration relative to the file itself.
    pub fn resolve(&self, path: &str) -> PathBuf {
        let p = Path::new(path);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn model(&self) -> Result<&ModelConfig> {
        self.config
            .model
            .as_ref()
            .context("config key model is missing")
    }
}
