//! Scenario configuration files.
//!
//! A config is TOML with the sections `[cart]`, `[ballbot]`, `[controller]`,
//! `[ekf]` (noise under `[ekf.noise]`) and `[scenario]` (command segments as
//! `[[scenario.segment]]`, disturbances as `[[scenario.disturbance]]`).
//! Missing keys take their defaults; unknown keys are rejected.

use std::path::Path;

use cartpush_core::{BallbotParams, CartParams, ControllerParams, EkfConfig, Scenario, SimConfig};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub cart: CartParams,
    pub ballbot: BallbotParams,
    pub controller: ControllerParams,
    pub ekf: EkfConfig,
    pub scenario: Scenario,
}

impl Config {
    pub fn sim_config(&self) -> SimConfig {
        SimConfig { cart: self.cart, ballbot: self.ballbot, controller: self.controller.clone(), ekf: self.ekf.clone() }
    }

    pub fn validate(&self) -> CliResult<()> {
        self.sim_config().validate().map_err(|e| CliError::Config(e.to_string()))?;
        self.scenario.validate().map_err(|e| CliError::Config(format!("[scenario] {e}")))
    }

    /// Parses and validates config text. Syntax and unknown-key errors carry
    /// the 1-based line they point at.
    pub fn parse(text: &str) -> CliResult<Self> {
        let cfg: Config = toml::from_str(text).map_err(|e| {
            let msg = e.message().trim();
            match e.span() {
                Some(span) => CliError::Config(format!("line {}: {msg}", line_of(text, span.start))),
                None => CliError::Config(msg.to_string()),
            }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path.display(), e))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config values serialize to TOML")
    }

    /// Fully resolved config, defaults included.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config values serialize to JSON")
    }
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}
