//! Per-subcommand configuration files (TOML or JSON) and their defaults.

use std::fs;
use std::path::Path;

use metastab_core::meta::{InferenceConfig, MetaConfig};
use metastab_core::regressor::RegressorConfig;
use metastab_core::synth::ShakeProfile;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Reads a config file; `.json` is parsed as JSON, anything else as TOML.
pub fn load<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(Error::io(path))?;
    let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
    let parsed = if is_json {
        serde_json::from_str(&text).map_err(|e| e.to_string())
    } else {
        toml::from_str(&text).map_err(|e| e.to_string())
    };
    parsed.map_err(|msg| Error::Config {
        path: path.to_path_buf(),
        msg,
    })
}

/// `synth-data` settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthDataConfig {
    pub videos: usize,
    pub frames: usize,
    pub width: usize,
    pub height: usize,
    /// Independently moving objects per scene.
    pub sprites: usize,
    pub profile: ShakeProfile,
    pub seed: u64,
}

impl Default for SynthDataConfig {
    fn default() -> Self {
        Self {
            videos: 8,
            frames: 60,
            width: 64,
            height: 64,
            sprites: 1,
            profile: ShakeProfile::default(),
            seed: 0,
        }
    }
}

/// `train-affine` settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainAffineConfig {
    #[serde(flatten)]
    pub regressor: RegressorConfig,
    /// Held-out warps evaluated after training.
    pub held_out: usize,
}

impl Default for TrainAffineConfig {
    fn default() -> Self {
        Self {
            regressor: RegressorConfig::default(),
            held_out: 200,
        }
    }
}

/// `meta-train` settings: every [`MetaConfig`] field plus run plumbing.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetaTrainConfig {
    #[serde(flatten)]
    pub meta: MetaConfig,
    /// Write the checkpoint every this many outer steps (0 = only at the end).
    pub checkpoint_every: usize,
    /// Train without the inner loop (baseline for comparisons).
    pub conventional: bool,
}

impl Default for MetaTrainConfig {
    fn default() -> Self {
        Self {
            meta: MetaConfig::default(),
            checkpoint_every: 50,
            conventional: false,
        }
    }
}

/// `stabilize` settings.
pub type StabilizeConfig = InferenceConfig;
