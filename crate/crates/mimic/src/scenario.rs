//! Scenario scripts: a declarative timeline of what the participant, the
//! model and the operator do, used to drive sessions without a camera.

use std::path::{Path, PathBuf};

use mimic_core::gesture::{Chirality, BUILTIN_NAMES};
use mimic_core::pose::Limb;
use mimic_core::scene::Side;
use mimic_core::session::{Command, Observation};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: invalid scenario: {source}")]
    Parse { path: PathBuf, source: serde_json::Error },
    #[error("entry {index}: unknown gesture {name:?}")]
    UnknownGesture { index: usize, name: String },
    #[error("entry {index}: at_ms {at_ms} is earlier than the previous entry")]
    Unordered { index: usize, at_ms: u64 },
    #[error("entry {index}: {reason}")]
    BadEntry { index: usize, reason: &'static str },
    #[error("fps must be positive and finite, got {0}")]
    BadFps(f64),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Actor {
    #[default]
    Participant,
    Model,
}

/// Which arms take part in a performed gesture. `right` and `left` are the
/// performer's own sides.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arms {
    #[default]
    Both,
    Right,
    Left,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "do", rename_all = "snake_case")]
pub enum Action {
    /// Move through the gesture's keyframes and back to neutral.
    Perform {
        gesture: String,
        #[serde(default = "direct")]
        chirality: Chirality,
        /// Coordinate jitter in torso lengths while performing.
        #[serde(default)]
        noise: Option<f64>,
        #[serde(default = "one")]
        speed: f64,
        /// 1.0 reaches the keyframe poses; smaller values fall short.
        #[serde(default = "one")]
        amplitude: f64,
        #[serde(default)]
        arms: Arms,
    },
    /// Explicitly nothing. Useful to document pauses.
    Idle {
        #[serde(default)]
        duration_ms: u64,
    },
    /// Make limbs undetectable.
    Hide { limbs: Vec<Limb>, duration_ms: u64 },
    /// Swing one arm periodically around shoulder height.
    Wave {
        period_ms: u64,
        duration_ms: u64,
        /// Elevation swing in radians.
        #[serde(default = "wave_amplitude")]
        amplitude: f64,
        #[serde(default = "right")]
        arm: Arms,
    },
    /// Small irregular arm movements that never form a gesture.
    Fidget {
        duration_ms: u64,
        #[serde(default = "fidget_amplitude")]
        amplitude: f64,
    },
    /// An operator observation entered at this time.
    Observe { observation: Observation },
    /// An operator command issued at this time.
    Command { command: Command },
    /// A miniature spurious skeleton on the wall, `height_ratio` times the
    /// participant's height.
    FalsePositive { height_ratio: f64, duration_ms: u64 },
}

fn direct() -> Chirality {
    Chirality::Direct
}
fn one() -> f64 {
    1.0
}
fn right() -> Arms {
    Arms::Right
}
fn wave_amplitude() -> f64 {
    0.8
}
fn fidget_amplitude() -> f64 {
    0.35
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Entry {
    pub at_ms: u64,
    #[serde(default)]
    pub actor: Actor,
    #[serde(flatten)]
    pub action: Action,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    /// Registered participant id the session is run for.
    pub participant: String,
    /// Image side the model stands on.
    #[serde(default = "left")]
    pub model_on: Side,
    /// Frames are generated over `[0, duration_ms]`.
    pub duration_ms: u64,
    #[serde(default = "default_fps")]
    pub fps: f64,
    /// Baseline coordinate jitter in torso lengths.
    #[serde(default)]
    pub noise: f64,
    pub entries: Vec<Entry>,
}

fn left() -> Side {
    Side::Left
}
fn default_fps() -> f64 {
    15.0
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Scenario, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn load(path: &Path) -> Result<Scenario, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io { path: path.into(), source })?;
        let s = Scenario::from_json(&text).map_err(|source| ScenarioError::Parse { path: path.into(), source })?;
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if !(self.fps.is_finite() && self.fps > 0.0) {
            return Err(ScenarioError::BadFps(self.fps));
        }
        let mut last = 0;
        for (index, e) in self.entries.iter().enumerate() {
            if e.at_ms < last {
                return Err(ScenarioError::Unordered { index, at_ms: e.at_ms });
            }
            last = e.at_ms;
            let bad = |reason| Err(ScenarioError::BadEntry { index, reason });
            match &e.action {
                Action::Perform { gesture, speed, amplitude, noise, .. } => {
                    if !BUILTIN_NAMES.contains(&gesture.as_str()) {
                        return Err(ScenarioError::UnknownGesture { index, name: gesture.clone() });
                    }
                    if !(speed.is_finite() && *speed > 0.0) {
                        return bad("speed must be positive");
                    }
                    if !amplitude.is_finite() {
                        return bad("amplitude must be finite");
                    }
                    if noise.is_some_and(|n| !(n.is_finite() && n >= 0.0)) {
                        return bad("noise must be a non-negative number");
                    }
                }
                Action::Wave { period_ms, .. } if *period_ms == 0 => return bad("period_ms must be positive"),
                Action::FalsePositive { height_ratio, .. } if !(*height_ratio > 0.0 && *height_ratio <= 1.0) => {
                    return bad("height_ratio must lie in (0, 1]");
                }
                Action::Observe { .. } | Action::Command { .. } if e.actor != Actor::Participant => {
                    return bad("observations and commands come from the operator, not the model");
                }
                _ => {}
            }
        }
        if !(self.noise.is_finite() && self.noise >= 0.0) {
            return Err(ScenarioError::BadEntry { index: 0, reason: "noise must be a non-negative number" });
        }
        Ok(())
    }
}
