//! The single JSON document configuring every pipeline stage.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::MatchingConfig;
use crate::filter::FilterRule;
use crate::frontend::FeatureConfig;
use crate::hmm::AdsrHmmSpec;
use crate::net::NoiseConfig;
use crate::sim::SimConfig;
use crate::toy::TrainConfig;

/// Optional default locations, used when a subcommand omits the matching
/// argument.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub weights: Option<PathBuf>,
    pub hmm: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub features: FeatureConfig,
    pub hmm: AdsrHmmSpec,
    pub filter: FilterRule,
    pub matching: MatchingConfig,
    pub noise: NoiseConfig,
    pub simulation: SimConfig,
    pub training: TrainConfig,
    pub paths: Paths,
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.features.validate()?;
        self.hmm.validate()?;
        self.filter.validate()?;
        self.matching.validate()?;
        self.noise.validate()?;
        self.simulation.validate()?;
        self.training.validate()?;
        for path in [&self.paths.weights, &self.paths.hmm].into_iter().flatten() {
            if !path.exists() {
                return Err(Error::config(format!("configured path {} does not exist", path.display())));
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let config: PipelineConfig =
            serde_json::from_str(text).map_err(|e| crate::io::json_error(text.as_bytes(), e))?;
        Ok(config)
    }

    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("config serializes");
        text.push('\n');
        text
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::from(e).in_file(path))?;
        Self::from_json(&text).map_err(|e| e.in_file(path))
    }
}
