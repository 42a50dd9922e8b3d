use core::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::{JointId, LimbSet, NormalizedSkeleton, PoseError};
use crate::geom::{angle_between, Vec2};

/// Scalar features. Angles are radians in `[0, π]`; reach, drop and torso
/// length are in normalized torso units.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scalar {
    /// Shoulder–elbow–wrist interior angle.
    RElbow,
    LElbow,
    /// Upper arm against the torso-down direction: 0 hanging, π/2 level, π overhead.
    RShoulderElev,
    LShoulderElev,
    /// Neck→mid-hip against image vertical.
    TorsoIncline,
    /// Wrist–shoulder image distance.
    RWristReach,
    LWristReach,
    /// Wrist height below the neck (positive = lower in the image).
    RWristDrop,
    LWristDrop,
    TorsoLen,
}

/// The angle-valued scalars, in the order used for similarity.
pub const ANGLE_SCALARS: [Scalar; 5] =
    [Scalar::RElbow, Scalar::LElbow, Scalar::RShoulderElev, Scalar::LShoulderElev, Scalar::TorsoIncline];

impl Scalar {
    pub const fn mirrored(self) -> Scalar {
        use Scalar::*;
        match self {
            RElbow => LElbow,
            LElbow => RElbow,
            RShoulderElev => LShoulderElev,
            LShoulderElev => RShoulderElev,
            RWristReach => LWristReach,
            LWristReach => RWristReach,
            RWristDrop => LWristDrop,
            LWristDrop => RWristDrop,
            TorsoIncline => TorsoIncline,
            TorsoLen => TorsoLen,
        }
    }

    pub const fn is_angle(self) -> bool {
        matches!(
            self,
            Scalar::RElbow | Scalar::LElbow | Scalar::RShoulderElev | Scalar::LShoulderElev | Scalar::TorsoIncline
        )
    }
}

/// Boolean features.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Flag {
    /// Wrist higher in the image than the nose.
    RWristAboveHead,
    LWristAboveHead,
}

impl Flag {
    pub const ALL: [Flag; 2] = [Flag::RWristAboveHead, Flag::LWristAboveHead];

    pub const fn mirrored(self) -> Flag {
        match self {
            Flag::RWristAboveHead => Flag::LWristAboveHead,
            Flag::LWristAboveHead => Flag::RWristAboveHead,
        }
    }
}

/// Joint-angle features of one pose. `None` marks a feature whose defining
/// joints were not all visible (or whose bones had zero length).
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct AngleFeatures {
    pub r_elbow: Option<f64>,
    pub l_elbow: Option<f64>,
    pub r_shoulder_elev: Option<f64>,
    pub l_shoulder_elev: Option<f64>,
    pub torso_incline: Option<f64>,
    pub r_wrist_above_head: Option<bool>,
    pub l_wrist_above_head: Option<bool>,
    pub torso_len: Option<f64>,
    pub r_wrist_reach: Option<f64>,
    pub l_wrist_reach: Option<f64>,
    pub r_wrist_drop: Option<f64>,
    pub l_wrist_drop: Option<f64>,
    pub limbs: LimbSet,
}

impl AngleFeatures {
    pub fn scalar(&self, s: Scalar) -> Option<f64> {
        match s {
            Scalar::RElbow => self.r_elbow,
            Scalar::LElbow => self.l_elbow,
            Scalar::RShoulderElev => self.r_shoulder_elev,
            Scalar::LShoulderElev => self.l_shoulder_elev,
            Scalar::TorsoIncline => self.torso_incline,
            Scalar::RWristReach => self.r_wrist_reach,
            Scalar::LWristReach => self.l_wrist_reach,
            Scalar::RWristDrop => self.r_wrist_drop,
            Scalar::LWristDrop => self.l_wrist_drop,
            Scalar::TorsoLen => self.torso_len,
        }
    }

    pub fn set_scalar(&mut self, s: Scalar, value: Option<f64>) {
        let slot = match s {
            Scalar::RElbow => &mut self.r_elbow,
            Scalar::LElbow => &mut self.l_elbow,
            Scalar::RShoulderElev => &mut self.r_shoulder_elev,
            Scalar::LShoulderElev => &mut self.l_shoulder_elev,
            Scalar::TorsoIncline => &mut self.torso_incline,
            Scalar::RWristReach => &mut self.r_wrist_reach,
            Scalar::LWristReach => &mut self.l_wrist_reach,
            Scalar::RWristDrop => &mut self.r_wrist_drop,
            Scalar::LWristDrop => &mut self.l_wrist_drop,
            Scalar::TorsoLen => &mut self.torso_len,
        };
        *slot = value;
    }

    pub fn flag(&self, f: Flag) -> Option<bool> {
        match f {
            Flag::RWristAboveHead => self.r_wrist_above_head,
            Flag::LWristAboveHead => self.l_wrist_above_head,
        }
    }

    pub fn set_flag(&mut self, f: Flag, value: Option<bool>) {
        match f {
            Flag::RWristAboveHead => self.r_wrist_above_head = value,
            Flag::LWristAboveHead => self.l_wrist_above_head = value,
        }
    }

    /// Features with left and right exchanged.
    pub fn mirrored(&self) -> AngleFeatures {
        AngleFeatures {
            r_elbow: self.l_elbow,
            l_elbow: self.r_elbow,
            r_shoulder_elev: self.l_shoulder_elev,
            l_shoulder_elev: self.r_shoulder_elev,
            torso_incline: self.torso_incline,
            r_wrist_above_head: self.l_wrist_above_head,
            l_wrist_above_head: self.r_wrist_above_head,
            torso_len: self.torso_len,
            r_wrist_reach: self.l_wrist_reach,
            l_wrist_reach: self.r_wrist_reach,
            r_wrist_drop: self.l_wrist_drop,
            l_wrist_drop: self.r_wrist_drop,
            limbs: self.limbs.mirrored(),
        }
    }

    /// Number of angle and flag features that are valid.
    pub fn valid_count(&self) -> usize {
        ANGLE_SCALARS.iter().filter(|s| self.scalar(**s).is_some()).count()
            + Flag::ALL.iter().filter(|f| self.flag(**f).is_some()).count()
    }
}

const IMAGE_DOWN: Vec2 = Vec2::new(0.0, 1.0);

/// Computes joint-angle features from a normalized skeleton.
///
/// The torso-down reference for shoulder elevation is neck→mid-hip; when no
/// hip is visible, image-down is used instead.
pub fn extract_features(skeleton: &NormalizedSkeleton) -> AngleFeatures {
    use JointId::*;
    let p = |j| skeleton.point(j);
    let neck = p(Neck);
    let torso = match (neck, skeleton.mid_hip()) {
        (Some(n), Some(h)) if !(h - n).is_degenerate() => Some(h - n),
        _ => None,
    };
    let down = torso.unwrap_or(IMAGE_DOWN);

    let elbow = |s, e, w| match (p(s), p(e), p(w)) {
        (Some(s), Some(e), Some(w)) => angle_between(s - e, w - e),
        _ => None,
    };
    let elevation = |s, e| match (neck, p(s), p(e)) {
        (Some(_), Some(s), Some(e)) => angle_between(e - s, down),
        _ => None,
    };
    let above_head = |w| match (p(w), p(Nose)) {
        (Some(w), Some(n)) => Some(w.y < n.y),
        _ => None,
    };
    let reach = |s, w| match (p(s), p(w)) {
        (Some(s), Some(w)) => Some((w - s).norm()).filter(|r| r.is_finite()),
        _ => None,
    };
    let drop = |w| match (neck, p(w)) {
        (Some(n), Some(w)) => Some(w.y - n.y),
        _ => None,
    };

    AngleFeatures {
        r_elbow: elbow(RShoulder, RElbow, RWrist),
        l_elbow: elbow(LShoulder, LElbow, LWrist),
        r_shoulder_elev: elevation(RShoulder, RElbow),
        l_shoulder_elev: elevation(LShoulder, LElbow),
        torso_incline: torso.and_then(|t| angle_between(t, IMAGE_DOWN)),
        r_wrist_above_head: above_head(RWrist),
        l_wrist_above_head: above_head(LWrist),
        torso_len: torso.map(|t| t.norm()),
        r_wrist_reach: reach(RShoulder, RWrist),
        l_wrist_reach: reach(LShoulder, LWrist),
        r_wrist_drop: drop(RWrist),
        l_wrist_drop: drop(LWrist),
        limbs: skeleton.visible_limbs(),
    }
}

/// Pose similarity in `[0, 1]`: one minus the mean absolute angle difference
/// over π, taken over the angles and flags valid in both inputs. A differing
/// flag counts as a difference of π.
pub fn similarity(a: &AngleFeatures, b: &AngleFeatures, min_shared: usize) -> Result<f64, PoseError> {
    let mut total = 0.0;
    let mut shared = 0usize;
    for s in ANGLE_SCALARS {
        if let (Some(x), Some(y)) = (a.scalar(s), b.scalar(s)) {
            total += libm::fabs(x - y);
            shared += 1;
        }
    }
    for f in Flag::ALL {
        if let (Some(x), Some(y)) = (a.flag(f), b.flag(f)) {
            total += if x == y { 0.0 } else { PI };
            shared += 1;
        }
    }
    if shared < min_shared.max(1) {
        return Err(PoseError::Incomparable { shared, required: min_shared.max(1) });
    }
    let sim = 1.0 - total / (shared as f64 * PI);
    Ok(if sim.is_finite() { sim.clamp(0.0, 1.0) } else { 0.0 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pose::{normalize, DEFAULT_MIN_SHARED};
    use crate::synth::{ArmPose, BodyPose, Placement};
    use core::f64::consts::FRAC_PI_2;

    fn features_of(pose: &BodyPose) -> AngleFeatures {
        let skel = pose.render(&Placement::default());
        extract_features(&normalize(&skel, 0.1).unwrap())
    }

    fn close(a: Option<f64>, b: f64) -> bool {
        a.is_some_and(|a| (a - b).abs() < 1e-6)
    }

    #[test]
    fn t_pose_angles() {
        let f = features_of(&BodyPose::uniform(ArmPose::level()));
        assert!(close(f.r_elbow, PI) && close(f.l_elbow, PI));
        assert!(close(f.r_shoulder_elev, FRAC_PI_2) && close(f.l_shoulder_elev, FRAC_PI_2));
        assert_eq!(f.r_wrist_above_head, Some(false));
    }

    #[test]
    fn arms_down_angles() {
        let f = features_of(&BodyPose::neutral());
        assert!(close(f.r_shoulder_elev, 0.0) && close(f.l_shoulder_elev, 0.0));
        assert_eq!(f.r_wrist_above_head, Some(false));
        assert_eq!(f.l_wrist_above_head, Some(false));
        assert!(close(f.torso_incline, 0.0));
        assert!(close(f.torso_len, 1.0));
    }

    #[test]
    fn arms_overhead_angles() {
        let f = features_of(&BodyPose::uniform(ArmPose::overhead()));
        assert!(close(f.r_shoulder_elev, PI) && close(f.l_shoulder_elev, PI));
        assert_eq!(f.r_wrist_above_head, Some(true));
        assert_eq!(f.l_wrist_above_head, Some(true));
    }

    #[test]
    fn similarity_of_raised_and_hanging_arms_is_three_sevenths() {
        // Raised vs hanging: elbows equal (π, π), incline equal (0), shoulder
        // elevations differ by π each, both flags differ. Seven shared
        // features, total difference 4π → 1 − 4/7.
        let up = features_of(&BodyPose::uniform(ArmPose::overhead()));
        let down = features_of(&BodyPose::neutral());
        let s = similarity(&up, &down, DEFAULT_MIN_SHARED).unwrap();
        assert!((s - 3.0 / 7.0).abs() < 1e-9, "{s}");
        assert!(s < 0.5);
    }

    #[test]
    fn disjoint_features_are_incomparable() {
        let a = AngleFeatures { r_elbow: Some(1.0), ..Default::default() };
        let b = AngleFeatures { l_elbow: Some(1.0), ..Default::default() };
        assert_eq!(similarity(&a, &b, 2), Err(PoseError::Incomparable { shared: 0, required: 2 }));
    }

    #[test]
    fn identical_features_are_fully_similar() {
        let f = features_of(&BodyPose::neutral());
        assert_eq!(similarity(&f, &f, 2), Ok(1.0));
    }

    #[test]
    fn zero_length_forearm_invalidates_elbow_only() {
        let skel = BodyPose::neutral().render(&Placement::default());
        let mut joints = *skel.joints();
        joints[JointId::RWrist.index()] = joints[JointId::RElbow.index()];
        let n = normalize(&crate::pose::Skeleton::new(joints).unwrap(), 0.1).unwrap();
        let f = extract_features(&n);
        assert_eq!(f.r_elbow, None);
        assert!(f.r_shoulder_elev.is_some());
        assert!(f.l_elbow.is_some());
    }
}
