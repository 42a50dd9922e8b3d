//! The configuration file: every tunable in one TOML document, with
//! documented defaults. `MIMIC_LISTEN` and `MIMIC_STORE` override the
//! listen address and store path; command-line flags override both.

use std::path::{Path, PathBuf};

use mimic_core::gesture::{builtin_templates_with, GestureTemplate, MatchConfig, TemplateParams, BUILTIN_NAMES};
use mimic_core::session::{RubricConfig, MOVEMENT_COUNT};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pipeline::{MotionConfig, PipelineConfig, SceneConfig, VisibilityConfig};

pub const ENV_LISTEN: &str = "MIMIC_LISTEN";
pub const ENV_STORE: &str = "MIMIC_STORE";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backpressure {
    /// Producers wait for room in the queue.
    Block,
    /// Live frames overwrite the oldest queued frame.
    DropOldest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GatewayConfig {
    /// Console WebSocket address.
    pub listen: String,
    /// Address the live pose stream connects to.
    pub live_listen: String,
    /// Frames per second forwarded to consoles, at most.
    pub max_frame_rate: f64,
    /// Depth of the engine's input queue and of each console's outbox.
    pub queue_capacity: usize,
    pub backpressure: Backpressure,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        GatewayConfig {
            listen: "127.0.0.1:8700".into(),
            live_listen: "127.0.0.1:8701".into(),
            max_frame_rate: 20.0,
            queue_capacity: 1024,
            backpressure: Backpressure::Block,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TemplatesConfig {
    /// Template used for each movement, in session order.
    pub sequence: Vec<String>,
    /// Tunables of the built-in templates.
    pub params: TemplateParams,
    /// Extra templates; one named like a built-in replaces it.
    pub custom: Vec<GestureTemplate>,
}

impl Default for TemplatesConfig {
    fn default() -> Self {
        TemplatesConfig {
            sequence: BUILTIN_NAMES.iter().map(|s| s.to_string()).collect(),
            params: TemplateParams::default(),
            custom: Vec::new(),
        }
    }
}

impl TemplatesConfig {
    /// Resolves the movement sequence to templates.
    pub fn resolve(&self) -> Result<Vec<GestureTemplate>, ConfigError> {
        if self.sequence.len() != MOVEMENT_COUNT as usize {
            return Err(ConfigError::Invalid(format!(
                "templates.sequence needs {MOVEMENT_COUNT} entries, found {}",
                self.sequence.len()
            )));
        }
        let builtins = builtin_templates_with(&self.params);
        self.sequence
            .iter()
            .map(|name| {
                let t = self
                    .custom
                    .iter()
                    .find(|t| &t.name == name)
                    .or_else(|| builtins.iter().find(|t| &t.name == name))
                    .ok_or_else(|| ConfigError::Invalid(format!("unknown template {name:?}")))?;
                t.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
                Ok(t.clone())
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    /// Session store directory.
    pub store: PathBuf,
    /// Frame rate assumed for replayed OpenPose directories.
    pub fps: f64,
    pub gateway: GatewayConfig,
    pub scene: SceneConfig,
    pub templates: TemplatesConfig,
    pub matcher: MatchConfig,
    pub motion: MotionConfig,
    pub visibility: VisibilityConfig,
    pub rubric: RubricConfig,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            store: PathBuf::from("mimic-store"),
            fps: 15.0,
            gateway: GatewayConfig::default(),
            scene: SceneConfig::default(),
            templates: TemplatesConfig::default(),
            matcher: MatchConfig::default(),
            motion: MotionConfig::default(),
            visibility: VisibilityConfig::default(),
            rubric: RubricConfig::default(),
        }
    }
}

fn unit(name: &str, v: f64) -> Result<(), ConfigError> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(ConfigError::Invalid(format!("{name} must lie in [0, 1], got {v}")))
    }
}

fn positive(name: &str, v: f64) -> Result<(), ConfigError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(ConfigError::Invalid(format!("{name} must be positive, got {v}")))
    }
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Config, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Reads `path` (defaults when `None`), then applies env overrides.
    pub fn load(path: Option<&Path>) -> Result<Config, ConfigError> {
        let mut cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|source| ConfigError::Io { path: p.into(), source })?;
                Config::from_toml(&text).map_err(|message| ConfigError::Parse { path: p.into(), message })?
            }
            None => Config::default(),
        };
        cfg.apply_env(|k| std::env::var(k).ok());
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn apply_env(&mut self, get: impl Fn(&str) -> Option<String>) {
        if let Some(v) = get(ENV_LISTEN) {
            self.gateway.listen = v;
        }
        if let Some(v) = get(ENV_STORE) {
            self.store = v.into();
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        positive("fps", self.fps)?;
        positive("gateway.max_frame_rate", self.gateway.max_frame_rate)?;
        if self.gateway.queue_capacity == 0 {
            return Err(ConfigError::Invalid("gateway.queue_capacity must be positive".into()));
        }
        let s = &self.scene;
        unit("scene.conf_min", s.conf_min)?;
        unit("scene.min_height_ratio", s.min_height_ratio)?;
        unit("scene.min_coverage", s.min_coverage)?;
        positive("scene.max_jump", s.max_jump)?;
        unit("matcher.unscoreable_fraction", self.matcher.unscoreable_fraction)?;
        if !(self.matcher.attempt_energy_min.is_finite() && self.matcher.attempt_energy_min >= 0.0) {
            return Err(ConfigError::Invalid("matcher.attempt_energy_min must be non-negative".into()));
        }
        positive("motion.rhythm_change_ratio", self.motion.rhythm_change_ratio)?;
        if self.motion.window_ms == 0 {
            return Err(ConfigError::Invalid("motion.window_ms must be positive".into()));
        }
        self.rubric.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.templates.resolve()?;
        Ok(())
    }

    pub fn pipeline(&self) -> Result<PipelineConfig, ConfigError> {
        Ok(PipelineConfig {
            scene: self.scene,
            templates: self.templates.resolve()?,
            matcher: self.matcher,
            motion: self.motion,
            visibility: self.visibility.clone(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dump_and_reload_is_identity() {
        let cfg = Config::default();
        let text = cfg.to_toml();
        assert_eq!(Config::from_toml(&text).unwrap(), cfg);
        assert!(text.contains("wait_window_ms = 30000"), "{text}");
    }

    #[test]
    fn partial_files_fill_defaults() {
        let cfg = Config::from_toml("fps = 30.0\n[rubric]\nwait_window_ms = 20000\n").unwrap();
        assert_eq!(cfg.fps, 30.0);
        assert_eq!(cfg.rubric.wait_window_ms, 20_000);
        assert_eq!(cfg.rubric.movement_window_ms, 20_000);
        assert_eq!(cfg.gateway.max_frame_rate, 20.0);
    }

    #[test]
    fn unknown_keys_and_bad_values_are_rejected() {
        assert!(Config::from_toml("[scene]\nmin_hieght_ratio = 0.3\n").is_err());
        let mut cfg = Config::default();
        cfg.scene.min_coverage = 1.5;
        assert!(cfg.validate().is_err());
        let mut cfg = Config::default();
        cfg.templates.sequence.pop();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn env_overrides_listen_and_store() {
        let mut cfg = Config::default();
        cfg.apply_env(|k| match k {
            ENV_LISTEN => Some("0.0.0.0:9000".into()),
            ENV_STORE => Some("/tmp/s".into()),
            _ => None,
        });
        assert_eq!(cfg.gateway.listen, "0.0.0.0:9000");
        assert_eq!(cfg.store, PathBuf::from("/tmp/s"));
    }

    #[test]
    fn custom_templates_replace_builtins_by_name() {
        let mut cfg = Config::default();
        let mut t = builtin_templates_with(&TemplateParams::default()).remove(0);
        t.timeout_ms = 5000;
        cfg.templates.custom.push(t);
        let text = cfg.to_toml();
        let back = Config::from_toml(&text).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.pipeline().unwrap().templates[0].timeout_ms, 5000);
    }
}
