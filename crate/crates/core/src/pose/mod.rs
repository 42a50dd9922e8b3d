//! Skeleton data types in the COCO-18 layout.
//!
//! Coordinates are image pixels: origin at the top-left corner, `y` grows
//! downward. "Above" therefore always means a smaller `y`.

mod features;
mod normalize;

use alloc::vec::Vec;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use features::{extract_features, similarity, AngleFeatures, Flag, Scalar, ANGLE_SCALARS};
pub use normalize::{normalize, NormJoint, NormalizedSkeleton, ScaleSource};

/// Minimum number of features two feature sets must share to be compared.
pub const DEFAULT_MIN_SHARED: usize = 2;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PoseError {
    /// The neck is invisible or no torso/shoulder scale reference exists.
    #[error("skeleton has no usable anchor (neck) or scale reference")]
    MissingAnchor,
    /// Two feature sets share fewer valid features than required.
    #[error("feature sets share {shared} valid features, {required} required")]
    Incomparable { shared: usize, required: usize },
    #[error("skeleton has no joint with non-zero confidence")]
    NoConfidentJoint,
}

/// Joint slots of the COCO-18 body model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JointId {
    Nose = 0,
    Neck = 1,
    RShoulder = 2,
    RElbow = 3,
    RWrist = 4,
    LShoulder = 5,
    LElbow = 6,
    LWrist = 7,
    RHip = 8,
    RKnee = 9,
    RAnkle = 10,
    LHip = 11,
    LKnee = 12,
    LAnkle = 13,
    REye = 14,
    LEye = 15,
    REar = 16,
    LEar = 17,
}

impl JointId {
    pub const COUNT: usize = 18;

    pub const ALL: [JointId; 18] = [
        JointId::Nose,
        JointId::Neck,
        JointId::RShoulder,
        JointId::RElbow,
        JointId::RWrist,
        JointId::LShoulder,
        JointId::LElbow,
        JointId::LWrist,
        JointId::RHip,
        JointId::RKnee,
        JointId::RAnkle,
        JointId::LHip,
        JointId::LKnee,
        JointId::LAnkle,
        JointId::REye,
        JointId::LEye,
        JointId::REar,
        JointId::LEar,
    ];

    pub const fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<JointId> {
        Self::ALL.get(index).copied()
    }

    /// The same joint on the other side of the body. Midline joints map to
    /// themselves.
    pub const fn mirrored(self) -> JointId {
        use JointId::*;
        match self {
            RShoulder => LShoulder,
            RElbow => LElbow,
            RWrist => LWrist,
            LShoulder => RShoulder,
            LElbow => RElbow,
            LWrist => RWrist,
            RHip => LHip,
            RKnee => LKnee,
            RAnkle => LAnkle,
            LHip => RHip,
            LKnee => RKnee,
            LAnkle => RAnkle,
            REye => LEye,
            LEye => REye,
            REar => LEar,
            LEar => REar,
            Nose => Nose,
            Neck => Neck,
        }
    }
}

/// Body segments used for visibility reports and template requirements.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Limb {
    Head,
    Torso,
    LArm,
    RArm,
    LLeg,
    RLeg,
}

impl Limb {
    pub const ALL: [Limb; 6] = [Limb::Head, Limb::Torso, Limb::LArm, Limb::RArm, Limb::LLeg, Limb::RLeg];

    /// Joints that must all be visible for the limb to count as visible.
    pub const fn joints(self) -> &'static [JointId] {
        use JointId::*;
        match self {
            Limb::Head => &[Nose, Neck],
            Limb::Torso => &[Neck, RHip, LHip],
            Limb::LArm => &[LShoulder, LElbow, LWrist],
            Limb::RArm => &[RShoulder, RElbow, RWrist],
            Limb::LLeg => &[LHip, LKnee, LAnkle],
            Limb::RLeg => &[RHip, RKnee, RAnkle],
        }
    }

    pub const fn mirrored(self) -> Limb {
        match self {
            Limb::LArm => Limb::RArm,
            Limb::RArm => Limb::LArm,
            Limb::LLeg => Limb::RLeg,
            Limb::RLeg => Limb::LLeg,
            other => other,
        }
    }

    pub const fn as_str(self) -> &'static str {
        match self {
            Limb::Head => "head",
            Limb::Torso => "torso",
            Limb::LArm => "l_arm",
            Limb::RArm => "r_arm",
            Limb::LLeg => "l_leg",
            Limb::RLeg => "r_leg",
        }
    }

    const fn bit(self) -> u8 {
        1 << (self as u8)
    }
}

/// A small set of limbs.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "Vec<Limb>", into = "Vec<Limb>")]
pub struct LimbSet(u8);

impl LimbSet {
    pub const EMPTY: LimbSet = LimbSet(0);

    pub fn from_limbs(limbs: &[Limb]) -> LimbSet {
        LimbSet(limbs.iter().fold(0, |acc, l| acc | l.bit()))
    }

    pub fn contains(self, limb: Limb) -> bool {
        self.0 & limb.bit() != 0
    }

    pub fn insert(&mut self, limb: Limb) {
        self.0 |= limb.bit();
    }

    pub fn is_superset(self, other: LimbSet) -> bool {
        self.0 & other.0 == other.0
    }

    pub fn union(self, other: LimbSet) -> LimbSet {
        LimbSet(self.0 | other.0)
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn mirrored(self) -> LimbSet {
        self.iter().fold(LimbSet::EMPTY, |mut acc, l| {
            acc.insert(l.mirrored());
            acc
        })
    }

    pub fn iter(self) -> impl Iterator<Item = Limb> {
        Limb::ALL.into_iter().filter(move |l| self.contains(*l))
    }
}

impl From<Vec<Limb>> for LimbSet {
    fn from(limbs: Vec<Limb>) -> Self {
        LimbSet::from_limbs(&limbs)
    }
}

impl From<LimbSet> for Vec<Limb> {
    fn from(set: LimbSet) -> Self {
        set.iter().collect()
    }
}

/// One detected joint. `x`/`y` are meaningless when the joint is invisible.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Keypoint {
    pub x: f64,
    pub y: f64,
    pub confidence: f64,
}

impl Keypoint {
    pub const fn new(x: f64, y: f64, confidence: f64) -> Self {
        Self { x, y, confidence }
    }

    pub const fn invisible() -> Self {
        Self { x: 0.0, y: 0.0, confidence: 0.0 }
    }

    pub fn is_visible(&self, conf_min: f64) -> bool {
        self.confidence >= conf_min && self.confidence > 0.0
    }
}

/// One person's 18 joints.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Skeleton {
    joints: [Keypoint; 18],
}

impl Skeleton {
    /// Builds a skeleton, clamping confidences into `[0, 1]` and blanking
    /// joints with non-finite values. Rejects skeletons where every
    /// confidence is zero.
    pub fn new(mut joints: [Keypoint; 18]) -> Result<Skeleton, PoseError> {
        for kp in joints.iter_mut() {
            if !kp.x.is_finite() || !kp.y.is_finite() || kp.confidence.is_nan() {
                *kp = Keypoint::invisible();
            } else {
                kp.confidence = kp.confidence.clamp(0.0, 1.0);
            }
        }
        if joints.iter().all(|kp| kp.confidence <= 0.0) {
            return Err(PoseError::NoConfidentJoint);
        }
        Ok(Skeleton { joints })
    }

    pub fn joints(&self) -> &[Keypoint; 18] {
        &self.joints
    }

    pub fn get(&self, joint: JointId) -> &Keypoint {
        &self.joints[joint.index()]
    }

    pub fn is_visible(&self, joint: JointId, conf_min: f64) -> bool {
        self.get(joint).is_visible(conf_min)
    }

    pub fn visible_count(&self, conf_min: f64) -> usize {
        self.joints.iter().filter(|kp| kp.is_visible(conf_min)).count()
    }

    /// Bounding box `(min_x, min_y, max_x, max_y)` over visible joints.
    pub fn bbox(&self, conf_min: f64) -> Option<(f64, f64, f64, f64)> {
        self.joints
            .iter()
            .filter(|kp| kp.is_visible(conf_min))
            .fold(None, |acc, kp| {
                Some(match acc {
                    None => (kp.x, kp.y, kp.x, kp.y),
                    Some((x0, y0, x1, y1)) => (x0.min(kp.x), y0.min(kp.y), x1.max(kp.x), y1.max(kp.y)),
                })
            })
    }

    /// Vertical extent of the visible joints, in pixels.
    pub fn height(&self, conf_min: f64) -> f64 {
        self.bbox(conf_min).map_or(0.0, |(_, y0, _, y1)| y1 - y0)
    }

    /// Reference point for tracking: the neck when visible, otherwise the
    /// centroid of the visible joints.
    pub fn anchor(&self, conf_min: f64) -> Option<(f64, f64)> {
        let neck = self.get(JointId::Neck);
        if neck.is_visible(conf_min) {
            return Some((neck.x, neck.y));
        }
        let (sx, sy, n) = self
            .joints
            .iter()
            .filter(|kp| kp.is_visible(conf_min))
            .fold((0.0, 0.0, 0usize), |(sx, sy, n), kp| (sx + kp.x, sy + kp.y, n + 1));
        (n > 0).then(|| (sx / n as f64, sy / n as f64))
    }

    /// Returns the same skeleton with the given joints marked undetected.
    pub fn with_hidden(&self, hidden: &[JointId]) -> Skeleton {
        let mut out = *self;
        for j in hidden {
            out.joints[j.index()] = Keypoint::invisible();
        }
        out
    }

    /// Left/right swapped skeleton, reflected about the neck's `x`.
    ///
    /// Exact involution whenever `2·neck_x − x` is representable, which holds
    /// for every single-precision pixel coordinate (the ingestion format).
    pub fn mirror(&self) -> Skeleton {
        let axis2 = 2.0 * self.get(JointId::Neck).x;
        let mut joints = [Keypoint::invisible(); 18];
        for joint in JointId::ALL {
            let src = self.joints[joint.index()];
            joints[joint.mirrored().index()] = Keypoint::new(axis2 - src.x, src.y, src.confidence);
        }
        Skeleton { joints }
    }
}

/// Free-function form of [`Skeleton::mirror`].
pub fn mirror(skeleton: &Skeleton) -> Skeleton {
    skeleton.mirror()
}

/// Where a frame came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrameSource {
    Replay,
    Live,
    Simulated,
}

/// All skeletons detected in one camera image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    /// Milliseconds since session start.
    pub timestamp_ms: u64,
    pub skeletons: Vec<Skeleton>,
    pub source: FrameSource,
}
