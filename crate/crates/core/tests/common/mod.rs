#![allow(dead_code)]

use mimic_core::pose::{JointId, Keypoint, Skeleton};
use mimic_core::synth::{ArmPose, BodyPose, Placement};
use proptest::prelude::*;

pub fn arm() -> impl Strategy<Value = ArmPose> {
    (-3.1f64..3.1, 0.0f64..1.5, 0.3f64..std::f64::consts::PI).prop_map(|(e, f, b)| ArmPose::new(e, f, b))
}

pub fn body() -> impl Strategy<Value = BodyPose> {
    (arm(), arm(), -0.5f64..1.4).prop_map(|(right, left, torso_incline)| BodyPose { right, left, torso_incline })
}

pub fn placement() -> impl Strategy<Value = Placement> {
    (100.0f64..540.0, 150.0f64..400.0, 20.0f64..150.0).prop_map(|(hip_x, hip_y, torso_px)| Placement {
        hip_x,
        hip_y,
        torso_px,
    })
}

/// Rendered bodies with some joints hidden.
pub fn skeleton() -> BoxedStrategy<Skeleton> {
    (body(), placement(), proptest::collection::vec(0usize..18, 0..6)).prop_map(|(b, p, hide)| {
        let hidden: Vec<JointId> = hide.into_iter().filter_map(JointId::from_index).collect();
        b.render(&p).with_hidden(&hidden)
    })
    .boxed()
}

/// Arbitrary keypoints, including coincident and out-of-range ones, with
/// coordinates representable as f32.
pub fn raw_skeleton() -> BoxedStrategy<Skeleton> {
    let kp = (
        prop_oneof![Just(0.0f32), Just(100.0f32), -1000.0f32..1000.0],
        prop_oneof![Just(0.0f32), Just(100.0f32), -1000.0f32..1000.0],
        prop_oneof![Just(0.0f32), Just(0.05f32), 0.0f32..1.5],
    )
        .prop_map(|(x, y, c)| Keypoint::new(x as f64, y as f64, c as f64));
    proptest::array::uniform18(kp.boxed())
        .prop_filter_map("no visible joint", |j| Skeleton::new(j).ok())
        .boxed()
}
