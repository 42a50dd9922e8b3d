//! Analytic body poses rendered to COCO-18 skeletons.
//!
//! Used by the scenario simulator and by tests. The model is planar: arms
//! rotate in the image plane, with an optional foreshortening angle for arms
//! pointing toward the camera, and bending tilts the torso about the hips.

use core::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

use crate::geom::Vec2;
use crate::pose::{JointId, Keypoint, Skeleton};

const SHOULDER_HALF_WIDTH: f64 = 0.4;
const HIP_HALF_WIDTH: f64 = 0.22;
const UPPER_ARM: f64 = 0.55;
const FOREARM: f64 = 0.5;
const THIGH: f64 = 0.9;
const SHIN: f64 = 0.85;

/// Confidence given to every rendered joint.
pub const RENDER_CONFIDENCE: f64 = 0.9;

/// Forward (toward camera) angle used for "arms extended forward".
pub const FORWARD_ARM_ANGLE: f64 = 1.2;
/// Torso incline of the sideways-arms bend keyframe.
pub const SIDE_BEND_INCLINE: f64 = 1.0;
/// Torso incline of the bend-to-toes keyframe.
pub const TOES_BEND_INCLINE: f64 = 1.35;

/// One arm. `elevation` rotates the upper arm from torso-down (0) outward
/// through level (π/2) to overhead (π); negative values rotate inward.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArmPose {
    pub elevation: f64,
    /// Rotation toward the camera; foreshortens the projected arm by
    /// `cos(forward)` in its lateral component.
    pub forward: f64,
    /// Interior elbow angle, π when straight.
    pub elbow: f64,
}

impl ArmPose {
    pub const fn new(elevation: f64, forward: f64, elbow: f64) -> Self {
        Self { elevation, forward, elbow }
    }

    pub const fn hanging() -> Self {
        Self::new(0.0, 0.0, PI)
    }

    pub const fn level() -> Self {
        Self::new(FRAC_PI_2, 0.0, PI)
    }

    pub const fn overhead() -> Self {
        Self::new(PI, 0.0, PI)
    }

    pub const fn forward() -> Self {
        Self::new(FRAC_PI_2, FORWARD_ARM_ANGLE, PI)
    }

    fn lerp(a: &ArmPose, b: &ArmPose, t: f64) -> ArmPose {
        ArmPose {
            elevation: lerp(a.elevation, b.elevation, t),
            forward: lerp(a.forward, b.forward, t),
            elbow: lerp(a.elbow, b.elbow, t),
        }
    }
}

/// Whole-body pose parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BodyPose {
    pub right: ArmPose,
    pub left: ArmPose,
    /// Neck→mid-hip angle from image vertical; the torso tips toward +x.
    pub torso_incline: f64,
}

impl BodyPose {
    pub const fn neutral() -> Self {
        Self::uniform(ArmPose::hanging())
    }

    pub const fn uniform(arm: ArmPose) -> Self {
        Self { right: arm, left: arm, torso_incline: 0.0 }
    }

    pub const fn bent(mut self, incline: f64) -> Self {
        self.torso_incline = incline;
        self
    }

    /// Bent forward by `incline` with both arms hanging straight down in the
    /// image, i.e. reaching toward the feet.
    pub const fn reaching_down(incline: f64) -> Self {
        Self {
            right: ArmPose::new(incline, 0.0, PI),
            left: ArmPose::new(-incline, 0.0, PI),
            torso_incline: incline,
        }
    }

    pub fn lerp(a: &BodyPose, b: &BodyPose, t: f64) -> BodyPose {
        BodyPose {
            right: ArmPose::lerp(&a.right, &b.right, t),
            left: ArmPose::lerp(&a.left, &b.left, t),
            torso_incline: lerp(a.torso_incline, b.torso_incline, t),
        }
    }

    /// Analytic shoulder elevation feature for one arm.
    pub fn shoulder_elevation(arm: &ArmPose) -> f64 {
        let lateral = libm::fabs(libm::sin(arm.elevation) * libm::cos(arm.forward));
        libm::atan2(lateral, libm::cos(arm.elevation))
    }

    /// Renders the pose with every joint visible.
    pub fn render(&self, placement: &Placement) -> Skeleton {
        let t = placement.torso_px;
        let (sin_i, cos_i) = (libm::sin(self.torso_incline), libm::cos(self.torso_incline));
        let down = Vec2::new(sin_i, cos_i);
        let lateral = Vec2::new(cos_i, -sin_i);
        let hip = Vec2::new(placement.hip_x, placement.hip_y);
        let neck = hip - down * t;

        let mut joints = [Keypoint::invisible(); 18];
        let mut put = |j: JointId, p: Vec2| joints[j.index()] = Keypoint::new(p.x, p.y, RENDER_CONFIDENCE);

        put(JointId::Neck, neck);
        put(JointId::Nose, neck - down * (0.3 * t));
        put(JointId::REye, neck - down * (0.38 * t) - lateral * (0.08 * t));
        put(JointId::LEye, neck - down * (0.38 * t) + lateral * (0.08 * t));
        put(JointId::REar, neck - down * (0.33 * t) - lateral * (0.16 * t));
        put(JointId::LEar, neck - down * (0.33 * t) + lateral * (0.16 * t));

        // The subject faces the camera, so their right side is image-left.
        let arms = [
            (-1.0, &self.right, JointId::RShoulder, JointId::RElbow, JointId::RWrist),
            (1.0, &self.left, JointId::LShoulder, JointId::LElbow, JointId::LWrist),
        ];
        for (side, arm, sj, ej, wj) in arms {
            let shoulder = neck + lateral * (side * SHOULDER_HALF_WIDTH * t);
            let dir = lateral * (side * libm::sin(arm.elevation) * libm::cos(arm.forward))
                + down * libm::cos(arm.elevation);
            let elbow = shoulder + dir * (UPPER_ARM * t);
            let bend = side * (PI - arm.elbow);
            let (sb, cb) = (libm::sin(bend), libm::cos(bend));
            let fore = Vec2::new(dir.x * cb - dir.y * sb, dir.x * sb + dir.y * cb);
            let wrist = elbow + fore * (FOREARM * t);
            put(sj, shoulder);
            put(ej, elbow);
            put(wj, wrist);
        }

        let legs = [
            (-1.0, JointId::RHip, JointId::RKnee, JointId::RAnkle),
            (1.0, JointId::LHip, JointId::LKnee, JointId::LAnkle),
        ];
        for (side, hj, kj, aj) in legs {
            let h = hip + Vec2::new(side * HIP_HALF_WIDTH * t, 0.0);
            let k = h + Vec2::new(0.0, THIGH * t);
            let a = k + Vec2::new(0.0, SHIN * t);
            put(hj, h);
            put(kj, k);
            put(aj, a);
        }

        Skeleton::new(joints).expect("rendered skeleton has visible joints")
    }
}

/// Where a rendered body stands in the image.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Placement {
    pub hip_x: f64,
    pub hip_y: f64,
    /// Neck-to-hip distance in pixels.
    pub torso_px: f64,
}

impl Default for Placement {
    fn default() -> Self {
        Placement { hip_x: 320.0, hip_y: 240.0, torso_px: 100.0 }
    }
}

/// Analytic keyframe poses of the built-in exercise gestures.
pub fn keyframe_poses(gesture: &str) -> Option<alloc::vec::Vec<BodyPose>> {
    use alloc::vec;
    match gesture {
        "raise_arms_sky" => Some(vec![BodyPose::uniform(ArmPose::overhead())]),
        "arms_side_bend_forward" => Some(vec![
            BodyPose::uniform(ArmPose::level()),
            BodyPose::uniform(ArmPose::level()).bent(SIDE_BEND_INCLINE),
        ]),
        "arms_forward_bend_toes" => Some(vec![
            BodyPose::uniform(ArmPose::forward()),
            BodyPose::reaching_down(TOES_BEND_INCLINE),
        ]),
        _ => None,
    }
}

fn lerp(a: f64, b: f64, t: f64) -> f64 {
    a + (b - a) * t
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pose::{extract_features, normalize};

    #[test]
    fn rendered_bones_have_model_lengths() {
        let s = BodyPose::neutral().render(&Placement::default());
        let d = |a: JointId, b: JointId| {
            let (p, q) = (s.get(a), s.get(b));
            libm::hypot(p.x - q.x, p.y - q.y)
        };
        assert!((d(JointId::Neck, JointId::RShoulder) - 40.0).abs() < 1e-9);
        assert!((d(JointId::RShoulder, JointId::RElbow) - 55.0).abs() < 1e-9);
        assert!((d(JointId::LElbow, JointId::LWrist) - 50.0).abs() < 1e-9);
        assert!(s.get(JointId::RShoulder).x < s.get(JointId::LShoulder).x);
    }

    #[test]
    fn keyframe_features_match_analytic_values() {
        for name in ["raise_arms_sky", "arms_side_bend_forward", "arms_forward_bend_toes"] {
            for pose in keyframe_poses(name).unwrap() {
                let f = extract_features(&normalize(&pose.render(&Placement::default()), 0.1).unwrap());
                let sr = BodyPose::shoulder_elevation(&pose.right);
                let sl = BodyPose::shoulder_elevation(&pose.left);
                assert!((f.r_shoulder_elev.unwrap() - sr).abs() < 1e-6, "{name}");
                assert!((f.l_shoulder_elev.unwrap() - sl).abs() < 1e-6, "{name}");
                assert!((f.torso_incline.unwrap() - pose.torso_incline).abs() < 1e-6, "{name}");
                assert!((f.r_elbow.unwrap() - pose.right.elbow).abs() < 1e-6, "{name}");
            }
        }
        assert!(keyframe_poses("cartwheel").is_none());
    }

    #[test]
    fn reaching_down_points_arms_at_the_floor() {
        let s = BodyPose::reaching_down(TOES_BEND_INCLINE).render(&Placement::default());
        for (sh, wr) in [(JointId::RShoulder, JointId::RWrist), (JointId::LShoulder, JointId::LWrist)] {
            assert!((s.get(sh).x - s.get(wr).x).abs() < 1e-9);
            assert!(s.get(wr).y > s.get(sh).y);
        }
    }

    #[test]
    fn bent_elbow_has_requested_interior_angle() {
        let pose = BodyPose::uniform(ArmPose::new(FRAC_PI_2, 0.0, 2.0));
        let f = extract_features(&normalize(&pose.render(&Placement::default()), 0.1).unwrap());
        assert!((f.r_elbow.unwrap() - 2.0).abs() < 1e-9);
        assert!((f.l_elbow.unwrap() - 2.0).abs() < 1e-9);
    }
}
