//! Exercise gestures as keyframe templates, and the matcher that decides
//! whether a participant performed them.

mod command;
mod matcher;
mod motion;
mod template;

pub use command::{mirror_pose_command, PoseCommand};
pub use matcher::{match_gesture, Chirality, FeatureFrame, GestureMatcher, MatchConfig, MatchError, MatchResult, MatchStatus};
pub use motion::{activity_changed, motion_stats, pair_displacement, MotionError, MotionStats, REFERENCE_FRAME_MS};
pub use template::{
    builtin_templates, builtin_templates_with, Constraint, GestureTemplate, KeyframeSpec, TemplateError,
    TemplateParams, BUILTIN_NAMES,
};

pub const DEFAULT_ATTEMPT_ENERGY_MIN: f64 = 0.02;
pub const DEFAULT_UNSCOREABLE_FRACTION: f64 = 0.5;
pub const DEFAULT_RHYTHM_CHANGE_RATIO: f64 = 1.5;
