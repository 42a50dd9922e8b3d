mod common;

use common::body;
use mimic_core::gesture::{
    builtin_templates, match_gesture, Chirality, Constraint, FeatureFrame, GestureMatcher, GestureTemplate,
    KeyframeSpec, MatchConfig, MatchStatus,
};
use mimic_core::pose::{mirror, Flag, JointId, Limb, LimbSet};
use mimic_core::synth::{keyframe_poses, ArmPose, BodyPose, Placement};
use proptest::prelude::*;

const C: f64 = 0.1;

fn raise_right_arm() -> GestureTemplate {
    GestureTemplate {
        name: "raise_right_arm".into(),
        keyframes: vec![KeyframeSpec {
            constraints: vec![
                Constraint::Flag { feature: Flag::RWristAboveHead, value: true },
                Constraint::Flag { feature: Flag::LWristAboveHead, value: false },
            ],
            hold_ms: 500,
            required_limbs: LimbSet::from_limbs(&[Limb::RArm, Limb::LArm]),
        }],
        timeout_ms: 20_000,
    }
}

fn templates() -> Vec<(GestureTemplate, Vec<BodyPose>)> {
    let mut out: Vec<_> = builtin_templates()
        .into_iter()
        .map(|t| {
            let poses = keyframe_poses(&t.name).unwrap();
            (t, poses)
        })
        .collect();
    let right_up = BodyPose { right: ArmPose::overhead(), ..BodyPose::neutral() };
    out.push((raise_right_arm(), vec![right_up]));
    out
}

#[derive(Debug, Clone)]
enum Pick {
    Keyframe(usize),
    Neutral,
    Random(BodyPose),
}

#[derive(Debug, Clone)]
struct Segment {
    pick: Pick,
    frames: usize,
    ramp: bool,
    hide_wrist: bool,
}

fn segment() -> impl Strategy<Value = Segment> {
    let pick = prop_oneof![
        4 => (0usize..2).prop_map(Pick::Keyframe),
        1 => Just(Pick::Neutral),
        2 => body().prop_map(Pick::Random),
    ];
    (pick, 1usize..25, any::<bool>(), proptest::bool::weighted(0.15)).prop_map(|(pick, frames, ramp, hide_wrist)| {
        Segment { pick, frames, ramp, hide_wrist }
    })
}

fn render_stream(poses: &[BodyPose], segments: &[Segment]) -> Vec<mimic_core::pose::Skeleton> {
    let mut out = Vec::new();
    let mut prev = BodyPose::neutral();
    for seg in segments {
        let target = match &seg.pick {
            Pick::Keyframe(k) => poses[k % poses.len()],
            Pick::Neutral => BodyPose::neutral(),
            Pick::Random(b) => *b,
        };
        for i in 0..seg.frames {
            let pose = if seg.ramp { BodyPose::lerp(&prev, &target, (i + 1) as f64 / seg.frames as f64) } else { target };
            let mut s = pose.render(&Placement::default());
            if seg.hide_wrist {
                s = s.with_hidden(&[JointId::LWrist]);
            }
            out.push(s);
        }
        prev = target;
    }
    out
}

fn frames_of(skeletons: &[mimic_core::pose::Skeleton], dt: u64) -> Vec<FeatureFrame> {
    skeletons
        .iter()
        .enumerate()
        .map(|(i, s)| FeatureFrame::from_skeleton(i as u64 * dt, s, C))
        .collect()
}

fn progress(frames: &[FeatureFrame], t: &GestureTemplate) -> (usize, usize) {
    let mut m = GestureMatcher::new(t.clone(), MatchConfig::default());
    for f in frames {
        m.push(f).unwrap();
    }
    (m.progress(Chirality::Direct), m.progress(Chirality::Mirrored))
}

fn widened(t: &GestureTemplate, k: f64) -> GestureTemplate {
    let mut t = t.clone();
    for kf in &mut t.keyframes {
        for c in &mut kf.constraints {
            if let Constraint::Near { tolerance, .. } = c {
                *tolerance *= k;
            }
        }
    }
    t
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn chirality_complete(which in 0usize..4, segs in proptest::collection::vec(segment(), 1..10), dt in prop_oneof![Just(33u64), Just(67), Just(100)]) {
        let (t, poses) = &templates()[which];
        let skels = render_stream(poses, &segs);
        let direct = frames_of(&skels, dt);
        let mirrored = frames_of(&skels.iter().map(mirror).collect::<Vec<_>>(), dt);
        let a = match_gesture(&direct, t, &MatchConfig::default()).unwrap();
        let b = match_gesture(&mirrored, t, &MatchConfig::default()).unwrap();
        prop_assert_eq!(a.status, b.status);
        prop_assert_eq!(a.keyframes_matched(), b.keyframes_matched());
        let (d, m) = progress(&direct, t);
        if d == m {
            prop_assert_eq!((a.chirality, b.chirality), (Chirality::Direct, Chirality::Direct));
        } else {
            prop_assert_eq!(a.chirality, b.chirality.flipped());
        }
    }

    #[test]
    fn wider_tolerance_keeps_success(which in 0usize..4, segs in proptest::collection::vec(segment(), 1..10), k in 1.0f64..3.0) {
        let (t, poses) = &templates()[which];
        let frames = frames_of(&render_stream(poses, &segs), 67);
        let base = match_gesture(&frames, t, &MatchConfig::default()).unwrap();
        let wide = match_gesture(&frames, &widened(t, k), &MatchConfig::default()).unwrap();
        if base.status == MatchStatus::Success {
            prop_assert_eq!(wide.status, MatchStatus::Success);
        }
        prop_assert!(wide.keyframes_matched() >= base.keyframes_matched());
    }

    #[test]
    fn matching_is_pure(which in 0usize..4, segs in proptest::collection::vec(segment(), 1..8)) {
        let (t, poses) = &templates()[which];
        let frames = frames_of(&render_stream(poses, &segs), 67);
        prop_assert_eq!(
            match_gesture(&frames, t, &MatchConfig::default()),
            match_gesture(&frames, t, &MatchConfig::default())
        );
    }

    #[test]
    fn still_stream_is_no_attempt(which in 0usize..4, pose in body(), n in 2usize..200) {
        let (t, _) = &templates()[which];
        let s = pose.render(&Placement::default());
        let frames: Vec<_> = (0..n).map(|i| FeatureFrame::from_skeleton(i as u64 * 67, &s, C)).collect();
        let holds = |f: &FeatureFrame| t.keyframes[0].holds(&f.features) || t.keyframes[0].holds(&f.features.mirrored());
        prop_assume!(!holds(&frames[0]));
        let r = match_gesture(&frames, t, &MatchConfig::default()).unwrap();
        prop_assert_eq!(r.energy, 0.0);
        prop_assert_eq!(r.status, MatchStatus::NoAttempt);
    }

    /// Abrupt segments of {kf1, kf2, neutral}: success iff a long-enough kf1
    /// segment is followed, later, by a long-enough kf2 segment.
    #[test]
    fn keyframes_are_ordered(segs in proptest::collection::vec((0usize..3, 1usize..30), 1..9)) {
        let t = builtin_templates().remove(2);
        let kf = keyframe_poses(&t.name).unwrap();
        let mut frames = Vec::new();
        for (pick, n) in &segs {
            let pose = if *pick < 2 { kf[*pick] } else { BodyPose::neutral() };
            let s = pose.render(&Placement::default());
            for _ in 0..*n {
                frames.push(FeatureFrame::from_skeleton(frames.len() as u64 * 67, &s, C));
            }
        }
        // Adjacent segments of one pose form a single hold; n frames at
        // 67 ms are held for (n - 1) * 67 ms.
        let mut runs: Vec<(usize, usize)> = Vec::new();
        for &(p, n) in &segs {
            match runs.last_mut() {
                Some((q, m)) if *q == p => *m += n,
                _ => runs.push((p, n)),
            }
        }
        let segs = runs;
        let long = |n: usize| (n as u64 - 1) * 67 >= 500;
        let first = segs.iter().position(|(p, n)| *p == 0 && long(*n));
        let expected = first.is_some_and(|i| segs[i + 1..].iter().any(|(p, n)| *p == 1 && long(*n)));
        let r = match_gesture(&frames, &t, &MatchConfig::default()).unwrap();
        prop_assert_eq!(r.status == MatchStatus::Success, expected);
    }
}
