//! Single-file TOML configuration covering every subsystem. Missing sections
//! and fields fall back to defaults, so an empty file is a valid config.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::clutch::InchwormConfig;
use crate::control::ControlConfig;
use crate::harness::HarnessConfig;
use crate::plant::PlantConfig;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServiceSettings {
    pub port: u16,
    /// Shared control-authority token; clients without it are observers.
    pub token: String,
    pub broadcast_hz: f64,
    /// Client silence after which motion setpoints are frozen, s.
    pub heartbeat_timeout: f64,
    /// Largest accepted jump of an end-effector target from the current tip, m.
    pub max_target_jump: f64,
    /// Newline-delimited JSON session log; none disables logging.
    pub session_log: Option<String>,
    /// Seed for the simulated plant behind the service.
    pub seed: u64,
    /// Tissue resistance the inch-worm drive works against, N.
    pub insertion_resistance: f64,
    /// Deepest accepted insertion target, m.
    pub max_insertion_depth: f64,
}

impl Default for ServiceSettings {
    fn default() -> Self {
        Self {
            port: 7878,
            token: "crane".into(),
            broadcast_hz: 30.0,
            heartbeat_timeout: 0.5,
            max_target_jump: 0.05,
            session_log: None,
            seed: 1,
            insertion_resistance: 5.0,
            max_insertion_depth: 0.2,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CraneConfig {
    pub plant: PlantConfig,
    pub control: ControlConfig,
    pub harness: HarnessConfig,
    pub clutch: InchwormConfig,
    pub service: ServiceSettings,
}

impl CraneConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Parse {
            line: e
                .span()
                .map(|s| text[..s.start.min(text.len())].lines().count().max(1))
                .unwrap_or(0),
            message: e.message().to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config is always serializable")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| Error::format(path, e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml()).map_err(|e| Error::io(path, e))
    }

    pub fn validate(&self) -> Result<()> {
        self.plant.validate()?;
        self.control.validate()?;
        self.harness.validate()?;
        self.clutch.validate()?;
        let s = &self.service;
        if !(s.broadcast_hz > 0.0
            && s.heartbeat_timeout > 0.0
            && s.max_target_jump > 0.0
            && s.max_insertion_depth > 0.0
            && s.insertion_resistance >= 0.0)
        {
            return Err(Error::InvalidParameter("service rates and limits must be positive".into()));
        }
        Ok(())
    }
}
