use std::path::Path;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use stereotac::experiments::{LeakageConfig, StereoSweepConfig, TactileExperimentConfig};

/// Contents of a `--config` file. Every section is optional; flags given on
/// the command line take precedence.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub tactile: TactileExperimentConfig,
    pub stereo: StereoSweepConfig,
    pub leakage: LeakageConfig,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text)
            .with_context(|| format!("invalid config schema in {}", path.display()))
    }
}
