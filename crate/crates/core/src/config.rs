//! Run configuration shared by the CLI and the campaign service.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::design::DesignConfig;
use crate::inference::ModelSettings;
use crate::sim::ExperimentConfig;
use crate::{Error, Result};

/// Every tunable setting. Missing fields take their defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub design: DesignConfig,
    pub model: ModelSettings,
    pub experiment: ExperimentConfig,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()
    }
}
