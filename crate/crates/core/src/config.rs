//! Toolkit configuration file (TOML).
//!
//! ```toml
//! surrogate_path = "surrogate.json"
//! bin_edges = [0.0, 0.25, 0.5, 0.75, 1.0]
//!
//! [scale]
//! beta_low = 0.0015
//! beta_high = 0.0009
//!
//! [train]
//! lr = 0.05
//! epochs = 10
//!
//! [server]
//! addr = "127.0.0.1:8080"
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::elicitation::AveragingMode;
use crate::error::{Error, Result};
use crate::qualification::Thresholds;
use crate::regressor::TrainConfig;
use crate::scale::ScaleParams;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToolkitConfig {
    pub scale: ScaleParams,
    pub train: TrainConfig,
    pub averaging: AveragingMode,
    pub qualification: Thresholds,
    pub surrogate_path: Option<PathBuf>,
    pub bin_edges: Option<Vec<f64>>,
    pub data: DataPaths,
    pub server: ServerConfig,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataPaths {
    pub dataset: Option<PathBuf>,
    pub events: Option<PathBuf>,
    pub qualification_items: Option<PathBuf>,
    pub features: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServerConfig {
    pub addr: String,
    pub redundancy: usize,
    pub max_qualification_attempts: u32,
    pub qualification_log: Option<PathBuf>,
}

impl Default for ServerConfig {
    fn default() -> Self {
        Self {
            addr: "127.0.0.1:8080".into(),
            redundancy: 2,
            max_qualification_attempts: 1,
            qualification_log: None,
        }
    }
}

impl ToolkitConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.into(),
            source: e,
        })?;
        let config = Self::from_toml(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        config.check_paths()?;
        Ok(config)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        self.scale.validate()?;
        if self.server.redundancy < 1 {
            return Err(Error::Config("server.redundancy must be at least 1".into()));
        }
        Ok(())
    }

    /// Every path the config names must exist.
    pub fn check_paths(&self) -> Result<()> {
        let paths = [
            &self.surrogate_path,
            &self.data.dataset,
            &self.data.qualification_items,
            &self.data.features,
        ];
        for p in paths.into_iter().flatten() {
            if !p.exists() {
                return Err(Error::Config(format!(
                    "configured path {} does not exist",
                    p.display()
                )));
            }
        }
        Ok(())
    }
}
