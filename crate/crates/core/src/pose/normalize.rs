use serde::{Deserialize, Serialize};

use super::{JointId, Limb, LimbSet, PoseError, Skeleton};
use crate::geom::{Vec2, EPS};

/// Which body measure set the normalization scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScaleSource {
    /// Neck to mid-hip distance.
    Hips,
    /// Twice the shoulder-to-shoulder distance (no hip visible).
    Shoulders,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct NormJoint {
    pub x: f64,
    pub y: f64,
    pub visible: bool,
}

/// A skeleton translated so the neck sits at the origin and scaled to torso
/// lengths. Invisible joints are stored as `(0, 0)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizedSkeleton {
    pub joints: [NormJoint; 18],
    pub scale_source: ScaleSource,
    /// Pixel length of one normalized unit.
    pub scale: f64,
}

impl NormalizedSkeleton {
    pub fn get(&self, joint: JointId) -> &NormJoint {
        &self.joints[joint.index()]
    }

    pub(crate) fn point(&self, joint: JointId) -> Option<Vec2> {
        let j = self.get(joint);
        j.visible.then_some(Vec2::new(j.x, j.y))
    }

    /// Midpoint of the visible hips, or the single visible hip.
    pub(crate) fn mid_hip(&self) -> Option<Vec2> {
        match (self.point(JointId::RHip), self.point(JointId::LHip)) {
            (Some(r), Some(l)) => Some((r + l) * 0.5),
            (Some(h), None) | (None, Some(h)) => Some(h),
            (None, None) => None,
        }
    }

    pub fn visible_limbs(&self) -> LimbSet {
        let mut set = LimbSet::EMPTY;
        for limb in Limb::ALL {
            if limb.joints().iter().all(|j| self.get(*j).visible) {
                set.insert(limb);
            }
        }
        set
    }

    /// Left/right swapped pose seen in a mirror (x negated about the neck).
    /// This is an exact involution.
    pub fn mirrored(&self) -> NormalizedSkeleton {
        let mut joints = [NormJoint::default(); 18];
        for joint in JointId::ALL {
            let src = self.joints[joint.index()];
            joints[joint.mirrored().index()] = NormJoint { x: -src.x, ..src };
        }
        NormalizedSkeleton { joints, ..*self }
    }
}

/// Moves the neck to the origin and divides by the torso length.
///
/// Falls back to twice the shoulder width when no hip is visible. Fails with
/// [`PoseError::MissingAnchor`] when the neck is invisible or neither scale
/// reference is usable.
pub fn normalize(skeleton: &Skeleton, conf_min: f64) -> Result<NormalizedSkeleton, PoseError> {
    let visible = |j: JointId| {
        let kp = skeleton.get(j);
        kp.is_visible(conf_min).then_some(Vec2::new(kp.x, kp.y))
    };
    let neck = visible(JointId::Neck).ok_or(PoseError::MissingAnchor)?;

    let mid_hip = match (visible(JointId::RHip), visible(JointId::LHip)) {
        (Some(r), Some(l)) => Some((r + l) * 0.5),
        (Some(h), None) | (None, Some(h)) => Some(h),
        (None, None) => None,
    };
    let torso = mid_hip.map(|h| (h - neck).norm()).filter(|len| len.is_finite() && *len >= EPS);

    let (scale, scale_source) = match torso {
        Some(len) => (len, ScaleSource::Hips),
        None => {
            let width = match (visible(JointId::RShoulder), visible(JointId::LShoulder)) {
                (Some(r), Some(l)) => (r - l).norm(),
                _ => return Err(PoseError::MissingAnchor),
            };
            let scale = 2.0 * width;
            if !scale.is_finite() || scale < EPS {
                return Err(PoseError::MissingAnchor);
            }
            (scale, ScaleSource::Shoulders)
        }
    };

    let mut joints = [NormJoint::default(); 18];
    for joint in JointId::ALL {
        if let Some(p) = visible(joint) {
            joints[joint.index()] = NormJoint {
                x: (p.x - neck.x) / scale,
                y: (p.y - neck.y) / scale,
                visible: true,
            };
        }
    }
    Ok(NormalizedSkeleton { joints, scale_source, scale })
}
