//! Skeleton analysis and session orchestration for a gesture-imitation game.
//!
//! The crate is `no_std` (with `alloc`) and contains no IO: callers feed it
//! parsed frames and timestamped events, and read back filtered scenes,
//! gesture verdicts and coded phase outcomes.
//!
//! * [`pose`]: COCO-18 skeletons, normalization, joint-angle features.
//! * [`scene`]: false-positive rejection, tracking and role assignment.
//! * [`gesture`]: exercise templates, keyframe matching, motion statistics.
//! * [`session`]: the phased interaction state machine and its rubric.
//! * [`synth`]: analytic body poses used to render synthetic skeletons.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;

mod geom;

pub mod gesture;
pub mod pose;
pub mod scene;
pub mod session;
pub mod synth;

/// Joints whose confidence falls below this are treated as not detected.
pub const DEFAULT_CONF_MIN: f64 = 0.10;
