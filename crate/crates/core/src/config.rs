//! The hub's configuration document.

use std::net::{IpAddr, Ipv4Addr};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::ConfigError;
use crate::model::{validate_config, validate_nodes, Calibration, Calibrations, NodeDescriptor, PolicyConfig, Violation};
use crate::pipeline::DEFAULT_CORRELATION_WINDOW_MS;

pub const DEFAULT_API_PORT: u16 = 8080;
pub const DEFAULT_BROKER_PORT: u16 = 4444;

/// Where the hub's notion of "now" comes from.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClockMode {
    /// Milliseconds since the hub started.
    #[default]
    Wall,
    /// Timestamps carried by incoming messages; timers only fire when a
    /// message moves time forward.
    Driven,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HubConfig {
    pub policy: PolicyConfig,
    pub calibrations: Vec<Calibration>,
    pub nodes: Vec<NodeDescriptor>,
    pub bind: IpAddr,
    pub lan_allowlist: Vec<IpAddr>,
    pub api_port: u16,
    pub broker_port: u16,
    pub data_dir: Option<PathBuf>,
    pub payload_seed: u64,
    pub clock: ClockMode,
    pub correlation_window_ms: u64,
}

impl Default for HubConfig {
    fn default() -> Self {
        HubConfig {
            policy: PolicyConfig::default(),
            calibrations: Vec::new(),
            nodes: Vec::new(),
            bind: IpAddr::V4(Ipv4Addr::LOCALHOST),
            lan_allowlist: Vec::new(),
            api_port: DEFAULT_API_PORT,
            broker_port: DEFAULT_BROKER_PORT,
            data_dir: None,
            payload_seed: 0,
            clock: ClockMode::Wall,
            correlation_window_ms: DEFAULT_CORRELATION_WINDOW_MS,
        }
    }
}

impl HubConfig {
    /// Reads a JSON config file and validates it.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io { path: path.to_owned(), source: e })?;
        let cfg: HubConfig = serde_json::from_str(&text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate().map_err(ConfigError::Invalid)?;
        Ok(cfg)
    }

    pub fn calibration_map(&self) -> Calibrations {
        self.calibrations.iter().map(|c| (c.channel.clone(), c.clone())).collect()
    }

    pub fn validate(&self) -> Result<(), Vec<Violation>> {
        let mut violations = Vec::new();
        if let Err(v) = validate_config(&self.policy, &self.calibration_map()) {
            violations.extend(v);
        }
        if let Err(v) = validate_nodes(&self.nodes) {
            violations.extend(v);
        }
        if self.calibration_map().len() != self.calibrations.len() {
            violations.push(Violation::new("duplicate calibration channel"));
        }
        if self.correlation_window_ms == 0 {
            violations.push(Violation::new("correlation window must be positive"));
        }
        if violations.is_empty() {
            Ok(())
        } else {
            Err(violations)
        }
    }
}
