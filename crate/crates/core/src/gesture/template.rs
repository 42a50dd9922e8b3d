use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pose::{AngleFeatures, Flag, Limb, LimbSet, Scalar};

/// Names of the three built-in exercise gestures, in session order.
pub const BUILTIN_NAMES: [&str; 3] = ["raise_arms_sky", "arms_side_bend_forward", "arms_forward_bend_toes"];

/// Minimum wrist–shoulder distance for arms held out to the side.
const LATERAL_REACH_MIN: f64 = 0.7;
/// Wrist–shoulder distance below which an arm counts as pointing at the
/// camera, when no T-pose calibration is available.
const FORWARD_REACH_UNCALIBRATED: f64 = 0.5;
/// Fraction of the calibrated arm length used for the same test.
const FORWARD_REACH_FRACTION: f64 = 0.5;
/// Wrists at least this far below the neck when reaching for the toes.
const TOES_WRIST_DROP_MIN: f64 = 0.4;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TemplateError {
    #[error("template {0:?} has no keyframes")]
    NoKeyframes(String),
    #[error("template {name:?} keyframe {keyframe}: tolerance must be positive")]
    BadTolerance { name: String, keyframe: usize },
    #[error("template {name:?} keyframe {keyframe}: bound must be finite")]
    BadBound { name: String, keyframe: usize },
}

/// One condition on a feature set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Constraint {
    Near { feature: Scalar, target: f64, tolerance: f64 },
    AtLeast { feature: Scalar, min: f64 },
    AtMost { feature: Scalar, max: f64 },
    Flag { feature: Flag, value: bool },
}

impl Constraint {
    /// True when the feature is valid and satisfies the condition.
    pub fn holds(&self, f: &AngleFeatures) -> bool {
        match *self {
            Constraint::Near { feature, target, tolerance } => {
                f.scalar(feature).is_some_and(|v| libm::fabs(v - target) <= tolerance)
            }
            Constraint::AtLeast { feature, min } => f.scalar(feature).is_some_and(|v| v >= min),
            Constraint::AtMost { feature, max } => f.scalar(feature).is_some_and(|v| v <= max),
            Constraint::Flag { feature, value } => f.flag(feature) == Some(value),
        }
    }

    pub fn mirrored(&self) -> Constraint {
        match *self {
            Constraint::Near { feature, target, tolerance } => {
                Constraint::Near { feature: feature.mirrored(), target, tolerance }
            }
            Constraint::AtLeast { feature, min } => Constraint::AtLeast { feature: feature.mirrored(), min },
            Constraint::AtMost { feature, max } => Constraint::AtMost { feature: feature.mirrored(), max },
            Constraint::Flag { feature, value } => Constraint::Flag { feature: feature.mirrored(), value },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeyframeSpec {
    pub constraints: Vec<Constraint>,
    /// Minimum time all constraints must hold without interruption.
    pub hold_ms: u64,
    /// Limbs that must be visible for this keyframe to be judged at all.
    pub required_limbs: LimbSet,
}

impl KeyframeSpec {
    pub fn holds(&self, f: &AngleFeatures) -> bool {
        self.constraints.iter().all(|c| c.holds(f))
    }

    /// A representative feature set for similarity scoring: targets of the
    /// angle constraints (bounds for one-sided ones) and required flags.
    pub fn target_features(&self) -> AngleFeatures {
        let mut out = AngleFeatures::default();
        for c in &self.constraints {
            match *c {
                Constraint::Near { feature, target: v, .. }
                | Constraint::AtLeast { feature, min: v }
                | Constraint::AtMost { feature, max: v } => {
                    if feature.is_angle() {
                        out.set_scalar(feature, Some(v));
                    }
                }
                Constraint::Flag { feature, value } => out.set_flag(feature, Some(value)),
            }
        }
        out
    }
}

/// An exercise gesture: keyframes that must be matched in order within
/// `timeout_ms` of the start of the attempt window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GestureTemplate {
    pub name: String,
    pub keyframes: Vec<KeyframeSpec>,
    pub timeout_ms: u64,
}

impl GestureTemplate {
    pub fn validate(&self) -> Result<(), TemplateError> {
        if self.keyframes.is_empty() {
            return Err(TemplateError::NoKeyframes(self.name.clone()));
        }
        for (k, kf) in self.keyframes.iter().enumerate() {
            for c in &kf.constraints {
                match *c {
                    Constraint::Near { target, tolerance, .. } => {
                        if !(tolerance > 0.0 && tolerance.is_finite()) {
                            return Err(TemplateError::BadTolerance { name: self.name.clone(), keyframe: k });
                        }
                        if !target.is_finite() {
                            return Err(TemplateError::BadBound { name: self.name.clone(), keyframe: k });
                        }
                    }
                    Constraint::AtLeast { min: b, .. } | Constraint::AtMost { max: b, .. } => {
                        if !b.is_finite() {
                            return Err(TemplateError::BadBound { name: self.name.clone(), keyframe: k });
                        }
                    }
                    Constraint::Flag { .. } => {}
                }
            }
        }
        Ok(())
    }

    /// Union of all keyframes' required limbs.
    pub fn required_limbs(&self) -> LimbSet {
        self.keyframes.iter().fold(LimbSet::EMPTY, |acc, k| acc.union(k.required_limbs))
    }
}

/// Tunables for the built-in templates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TemplateParams {
    /// Angle tolerance in radians.
    pub tolerance: f64,
    /// Tolerance on wrist height, in torso lengths.
    pub height_tolerance: f64,
    pub bend_threshold: f64,
    pub deep_bend_threshold: f64,
    pub hold_ms: u64,
    pub timeout_ms: u64,
    /// Shoulder-to-wrist length measured in a T-pose, in torso lengths.
    pub arm_length: Option<f64>,
}

impl Default for TemplateParams {
    fn default() -> Self {
        TemplateParams {
            tolerance: 0.35,
            height_tolerance: 0.35,
            bend_threshold: 0.6,
            deep_bend_threshold: 1.0,
            hold_ms: 500,
            timeout_ms: 20_000,
            arm_length: None,
        }
    }
}

pub fn builtin_templates() -> Vec<GestureTemplate> {
    builtin_templates_with(&TemplateParams::default())
}

/// The three exercise gestures. Legs are never required: bends are read
/// from the torso incline alone.
pub fn builtin_templates_with(p: &TemplateParams) -> Vec<GestureTemplate> {
    use Scalar::*;
    let near = |feature, target| Constraint::Near { feature, target, tolerance: p.tolerance };
    let arms = LimbSet::from_limbs(&[Limb::RArm, Limb::LArm]);
    let torso = LimbSet::from_limbs(&[Limb::Torso]);
    let forward_reach = p
        .arm_length
        .map_or(FORWARD_REACH_UNCALIBRATED, |len| FORWARD_REACH_FRACTION * len);

    let raise = GestureTemplate {
        name: BUILTIN_NAMES[0].to_string(),
        keyframes: vec![KeyframeSpec {
            constraints: vec![
                Constraint::Flag { feature: Flag::RWristAboveHead, value: true },
                Constraint::Flag { feature: Flag::LWristAboveHead, value: true },
                near(RElbow, PI),
                near(LElbow, PI),
                near(RShoulderElev, PI),
                near(LShoulderElev, PI),
            ],
            hold_ms: p.hold_ms,
            required_limbs: arms,
        }],
        timeout_ms: p.timeout_ms,
    };

    let side_bend = GestureTemplate {
        name: BUILTIN_NAMES[1].to_string(),
        keyframes: vec![
            KeyframeSpec {
                constraints: vec![
                    near(RElbow, PI),
                    near(LElbow, PI),
                    near(RShoulderElev, FRAC_PI_2),
                    near(LShoulderElev, FRAC_PI_2),
                    Constraint::AtLeast { feature: RWristReach, min: LATERAL_REACH_MIN },
                    Constraint::AtLeast { feature: LWristReach, min: LATERAL_REACH_MIN },
                ],
                hold_ms: p.hold_ms,
                required_limbs: arms,
            },
            KeyframeSpec {
                constraints: vec![Constraint::AtLeast { feature: TorsoIncline, min: p.bend_threshold }],
                hold_ms: p.hold_ms,
                required_limbs: torso,
            },
        ],
        timeout_ms: p.timeout_ms,
    };

    let toes = GestureTemplate {
        name: BUILTIN_NAMES[2].to_string(),
        keyframes: vec![
            KeyframeSpec {
                constraints: vec![
                    Constraint::AtMost { feature: RWristReach, max: forward_reach },
                    Constraint::AtMost { feature: LWristReach, max: forward_reach },
                    Constraint::Near { feature: RWristDrop, target: 0.0, tolerance: p.height_tolerance },
                    Constraint::Near { feature: LWristDrop, target: 0.0, tolerance: p.height_tolerance },
                ],
                hold_ms: p.hold_ms,
                required_limbs: arms,
            },
            KeyframeSpec {
                constraints: vec![
                    Constraint::AtLeast { feature: TorsoIncline, min: p.deep_bend_threshold },
                    Constraint::AtLeast { feature: RWristDrop, min: TOES_WRIST_DROP_MIN },
                    Constraint::AtLeast { feature: LWristDrop, min: TOES_WRIST_DROP_MIN },
                ],
                hold_ms: p.hold_ms,
                required_limbs: torso.union(arms),
            },
        ],
        timeout_ms: p.timeout_ms,
    };

    vec![raise, side_bend, toes]
}
