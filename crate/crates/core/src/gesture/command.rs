use alloc::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::pose::{extract_features, normalize, PoseError, Scalar, Skeleton, ANGLE_SCALARS};

/// Joint-angle targets for the model to hold. Angles with no valid source
/// are absent.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PoseCommand {
    pub targets: BTreeMap<Scalar, f64>,
}

/// Targets that make the model show the participant's pose as a mirror
/// would: the participant's left arm drives the model's right arm.
pub fn mirror_pose_command(participant: &Skeleton, conf_min: f64) -> Result<PoseCommand, PoseError> {
    let features = extract_features(&normalize(participant, conf_min)?.mirrored());
    let targets = ANGLE_SCALARS
        .iter()
        .filter_map(|&s| features.scalar(s).map(|v| (s, v)))
        .collect();
    Ok(PoseCommand { targets })
}
