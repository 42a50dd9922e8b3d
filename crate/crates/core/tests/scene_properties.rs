mod common;

use common::{raw_skeleton, skeleton};
use mimic_core::pose::{Frame, FrameSource, Skeleton};
use mimic_core::scene::{
    assign_roles, coverage, reject_false_positives, track, Role, RolePolicy, Side, TrackId, TrackerConfig,
    TrackerState,
};
use proptest::prelude::*;

const C: f64 = 0.1;

fn people() -> impl Strategy<Value = Vec<Skeleton>> {
    proptest::collection::vec(prop_oneof![3 => skeleton(), 1 => raw_skeleton()], 0..5)
}

fn frame(t: u64, skeletons: Vec<Skeleton>) -> Frame {
    Frame { timestamp_ms: t, skeletons, source: FrameSource::Simulated }
}

fn policy() -> impl Strategy<Value = RolePolicy> {
    prop_oneof![
        Just(RolePolicy::BySide { model_on: Side::Left }),
        Just(RolePolicy::BySide { model_on: Side::Right }),
        (0u32..6, prop_oneof![Just(Role::Model), Just(Role::Participant), Just(Role::Unassigned)])
            .prop_map(|(t, role)| RolePolicy::ByOperator { track: TrackId(t), role }),
    ]
}

proptest! {
    #[test]
    fn filtering_is_idempotent(s in people(), ratio in 0.0f64..1.0, cov in 0.0f64..1.0) {
        let once = reject_false_positives(&frame(0, s), ratio, cov, C);
        prop_assert_eq!(reject_false_positives(&once, ratio, cov, C), once.clone());
    }

    #[test]
    fn tallest_covered_skeleton_survives(s in people(), ratio in 0.0f64..1.0, cov in 0.0f64..1.0) {
        let f = frame(0, s);
        let out = reject_false_positives(&f, ratio, cov, C);
        let tallest = f
            .skeletons
            .iter()
            .filter(|k| coverage(k, C) >= cov)
            .max_by(|a, b| a.height(C).total_cmp(&b.height(C)));
        if let Some(t) = tallest {
            prop_assert!(out.skeletons.contains(t));
        }
        prop_assert!(out.skeletons.iter().all(|k| f.skeletons.contains(k)));
    }

    #[test]
    fn roles_stay_unique(frames in proptest::collection::vec(people(), 1..12), policies in proptest::collection::vec(policy(), 12)) {
        let cfg = TrackerConfig::default();
        let mut state = TrackerState::default();
        for (i, (people, policy)) in frames.into_iter().zip(policies).enumerate() {
            let f = reject_false_positives(&frame(i as u64 * 67, people), 0.3, 0.25, C);
            state = track(state, &f, &cfg);
            if let Ok(tracks) = assign_roles(state.tracks.clone(), policy) {
                state.tracks = tracks;
            }
            for role in [Role::Participant, Role::Model] {
                prop_assert!(state.tracks.iter().filter(|t| t.role == role).count() <= 1);
            }
        }
    }

    #[test]
    fn tracking_is_deterministic(frames in proptest::collection::vec(people(), 1..10), gap in 30u64..1500) {
        let cfg = TrackerConfig::default();
        let run = || {
            frames.iter().enumerate().fold(TrackerState::default(), |st, (i, p)| {
                track(st, &frame(i as u64 * gap, p.clone()), &cfg)
            })
        };
        prop_assert_eq!(run(), run());
    }
}
