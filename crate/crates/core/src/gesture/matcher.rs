use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::motion::{pair_displacement, REFERENCE_FRAME_MS};
use super::template::GestureTemplate;
use crate::pose::{extract_features, normalize, similarity, AngleFeatures, LimbSet, NormalizedSkeleton, Skeleton};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MatchError {
    #[error("no frames to match")]
    EmptyStream,
    #[error("timestamp {got} ms does not follow {prev} ms")]
    NonIncreasing { prev: u64, got: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchStatus {
    Success,
    AttemptFailed,
    NoAttempt,
    Unscoreable,
}

/// Whether the gesture was performed as shown, or left/right swapped as a
/// mirror image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Chirality {
    Direct,
    Mirrored,
}

impl Chirality {
    pub fn flipped(self) -> Chirality {
        match self {
            Chirality::Direct => Chirality::Mirrored,
            Chirality::Mirrored => Chirality::Direct,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MatchConfig {
    /// Motion energy above which the participant is considered to be trying.
    pub attempt_energy_min: f64,
    /// Fraction of frames lacking the required limbs above which an attempt
    /// cannot be judged.
    pub unscoreable_fraction: f64,
}

impl Default for MatchConfig {
    fn default() -> Self {
        MatchConfig {
            attempt_energy_min: super::DEFAULT_ATTEMPT_ENERGY_MIN,
            unscoreable_fraction: super::DEFAULT_UNSCOREABLE_FRACTION,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    pub status: MatchStatus,
    pub chirality: Chirality,
    /// Time each keyframe was matched, in order; `None` past the last match.
    pub keyframe_times: Vec<Option<u64>>,
    /// Best similarity reached against each keyframe.
    pub best_similarity: Vec<Option<f64>>,
    /// Peak motion energy: the highest one-second mean of per-frame joint
    /// displacement (torso lengths per 15 fps frame).
    pub energy: f64,
    /// Frames that fell inside the timeout window.
    pub frames: usize,
}

impl MatchResult {
    pub fn keyframes_matched(&self) -> usize {
        self.keyframe_times.iter().take_while(|t| t.is_some()).count()
    }
}

/// One participant observation: the normalized pose, if there was one, and
/// its features.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureFrame {
    pub t_ms: u64,
    pub pose: Option<NormalizedSkeleton>,
    pub features: AngleFeatures,
}

impl FeatureFrame {
    pub fn new(t_ms: u64, pose: Option<NormalizedSkeleton>) -> Self {
        let features = pose.as_ref().map(extract_features).unwrap_or_default();
        FeatureFrame { t_ms, pose, features }
    }

    /// Frame for a skeleton; one that cannot be normalized carries no pose.
    pub fn from_skeleton(t_ms: u64, skeleton: &Skeleton, conf_min: f64) -> Self {
        FeatureFrame::new(t_ms, normalize(skeleton, conf_min).ok())
    }

    /// Frame in which the participant was not seen.
    pub fn absent(t_ms: u64) -> Self {
        FeatureFrame::new(t_ms, None)
    }

    pub fn mirrored(&self) -> Self {
        FeatureFrame {
            t_ms: self.t_ms,
            pose: self.pose.as_ref().map(NormalizedSkeleton::mirrored),
            features: self.features.mirrored(),
        }
    }

    fn limbs(&self) -> LimbSet {
        self.pose.as_ref().map_or(LimbSet::EMPTY, NormalizedSkeleton::visible_limbs)
    }
}

/// Span over which activity is averaged before taking the peak, so a brief
/// attempt inside a long window still registers.
const ACTIVITY_WINDOW_MS: u64 = 1000;

#[derive(Debug, Clone, Default)]
struct Activity {
    recent: VecDeque<(u64, f64)>,
    total: f64,
    pairs: usize,
    peak: Option<f64>,
}

impl Activity {
    fn push(&mut self, start: u64, t: u64, d: f64) {
        self.total += d;
        self.pairs += 1;
        self.recent.push_back((t, d));
        while self.recent.front().is_some_and(|(u, _)| *u + ACTIVITY_WINDOW_MS <= t) {
            self.recent.pop_front();
        }
        if t - start >= ACTIVITY_WINDOW_MS {
            let mean = self.recent.iter().map(|(_, d)| d).sum::<f64>() / self.recent.len() as f64;
            self.peak = Some(self.peak.map_or(mean, |p| p.max(mean)));
        }
    }

    fn energy(&self) -> f64 {
        match self.peak {
            Some(p) => p,
            None if self.pairs > 0 => self.total / self.pairs as f64,
            None => 0.0,
        }
    }
}

#[derive(Debug, Clone)]
struct Run {
    next: usize,
    streak_start: Option<u64>,
    times: Vec<Option<u64>>,
    best: Vec<Option<f64>>,
}

impl Run {
    fn new(n: usize) -> Self {
        Run { next: 0, streak_start: None, times: vec![None; n], best: vec![None; n] }
    }

    fn step(&mut self, template: &GestureTemplate, targets: &[AngleFeatures], t: u64, f: &AngleFeatures) {
        for (best, target) in self.best.iter_mut().zip(targets) {
            if let Ok(s) = similarity(target, f, 1) {
                *best = Some(best.map_or(s, |b: f64| b.max(s)));
            }
        }
        let Some(kf) = template.keyframes.get(self.next) else { return };
        if !kf.holds(f) {
            self.streak_start = None;
            return;
        }
        let start = *self.streak_start.get_or_insert(t);
        if t - start >= kf.hold_ms {
            self.times[self.next] = Some(t);
            self.next += 1;
            self.streak_start = None;
        }
    }

    fn complete(&self) -> bool {
        self.next == self.times.len()
    }
}

/// Incremental matcher for one template over one attempt window, run for
/// both chiralities at once.
#[derive(Debug, Clone)]
pub struct GestureMatcher {
    template: GestureTemplate,
    config: MatchConfig,
    targets: Vec<AngleFeatures>,
    required: LimbSet,
    start: Option<u64>,
    last_t: Option<u64>,
    frames: usize,
    unscoreable: usize,
    prev_pose: Option<(u64, NormalizedSkeleton)>,
    activity: Activity,
    direct: Run,
    mirrored: Run,
}

impl GestureMatcher {
    pub fn new(template: GestureTemplate, config: MatchConfig) -> Self {
        let n = template.keyframes.len();
        let targets = template.keyframes.iter().map(|k| k.target_features()).collect();
        let required = template.required_limbs();
        GestureMatcher {
            template,
            config,
            targets,
            required,
            start: None,
            last_t: None,
            frames: 0,
            unscoreable: 0,
            prev_pose: None,
            activity: Activity::default(),
            direct: Run::new(n),
            mirrored: Run::new(n),
        }
    }

    pub fn template(&self) -> &GestureTemplate {
        &self.template
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    /// Feeds one frame. Frames past the timeout are accepted and ignored.
    pub fn push(&mut self, frame: &FeatureFrame) -> Result<(), MatchError> {
        if let Some(prev) = self.last_t {
            if frame.t_ms <= prev {
                return Err(MatchError::NonIncreasing { prev, got: frame.t_ms });
            }
        }
        self.last_t = Some(frame.t_ms);
        let start = *self.start.get_or_insert(frame.t_ms);
        if frame.t_ms - start > self.template.timeout_ms {
            return Ok(());
        }
        self.frames += 1;

        let limbs = frame.limbs();
        if !(limbs.is_superset(self.required) || limbs.is_superset(self.required.mirrored())) {
            self.unscoreable += 1;
        }

        if let Some(pose) = &frame.pose {
            if let Some((pt, prev)) = &self.prev_pose {
                if let Some(d) = pair_displacement(prev, pose) {
                    let dt = (frame.t_ms - pt) as f64;
                    self.activity.push(start, frame.t_ms, d * REFERENCE_FRAME_MS / dt);
                }
            }
            self.prev_pose = Some((frame.t_ms, *pose));
        }

        let mirrored = frame.features.mirrored();
        self.direct.step(&self.template, &self.targets, frame.t_ms, &frame.features);
        self.mirrored.step(&self.template, &self.targets, frame.t_ms, &mirrored);
        Ok(())
    }

    /// Peak motion energy so far. Streams shorter than the activity window
    /// report their overall mean.
    pub fn energy(&self) -> f64 {
        self.activity.energy()
    }

    /// Keyframes matched so far when reading the stream as shown, or
    /// left/right swapped.
    pub fn progress(&self, chirality: Chirality) -> usize {
        match chirality {
            Chirality::Direct => self.direct.next,
            Chirality::Mirrored => self.mirrored.next,
        }
    }

    /// True once either chirality has matched every keyframe.
    pub fn succeeded(&self) -> bool {
        self.direct.complete() || self.mirrored.complete()
    }

    pub fn result(&self) -> Result<MatchResult, MatchError> {
        if self.frames == 0 {
            return Err(MatchError::EmptyStream);
        }
        let (chirality, run) = if self.mirrored.next > self.direct.next {
            (Chirality::Mirrored, &self.mirrored)
        } else {
            (Chirality::Direct, &self.direct)
        };
        let energy = self.energy();
        let status = if run.complete() {
            MatchStatus::Success
        } else if energy > self.config.attempt_energy_min {
            if self.unscoreable as f64 > self.config.unscoreable_fraction * self.frames as f64 {
                MatchStatus::Unscoreable
            } else {
                MatchStatus::AttemptFailed
            }
        } else {
            MatchStatus::NoAttempt
        };
        Ok(MatchResult {
            status,
            chirality,
            keyframe_times: run.times.clone(),
            best_similarity: run.best.clone(),
            energy,
            frames: self.frames,
        })
    }
}

/// Matches a whole attempt window at once.
pub fn match_gesture(
    frames: &[FeatureFrame],
    template: &GestureTemplate,
    config: &MatchConfig,
) -> Result<MatchResult, MatchError> {
    let mut m = GestureMatcher::new(template.clone(), *config);
    for f in frames {
        m.push(f)?;
    }
    m.result()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gesture::{builtin_templates, Constraint, KeyframeSpec};
    use crate::pose::{Flag, JointId, Limb, Scalar};
    use crate::synth::{keyframe_poses, ArmPose, BodyPose, Placement};
    use alloc::string::ToString;

    const DT: u64 = 67;

    fn frame(t: u64, pose: &BodyPose) -> FeatureFrame {
        FeatureFrame::from_skeleton(t, &pose.render(&Placement::default()), 0.1)
    }

    /// neutral → each keyframe (ramp, hold) → neutral.
    fn perform(poses: &[BodyPose], hold_ms: u64) -> Vec<FeatureFrame> {
        let mut out = Vec::new();
        let mut t = 0;
        let mut from = BodyPose::neutral();
        for to in poses.iter().chain([&BodyPose::neutral()]) {
            for i in 1..=12 {
                out.push(frame(t, &BodyPose::lerp(&from, to, i as f64 / 12.0)));
                t += DT;
            }
            for _ in 0..hold_ms / DT {
                out.push(frame(t, to));
                t += DT;
            }
            from = *to;
        }
        out
    }

    fn raise_right_arm() -> GestureTemplate {
        GestureTemplate {
            name: "raise_right_arm".to_string(),
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

    fn right_arm_up() -> BodyPose {
        BodyPose { right: ArmPose::overhead(), ..BodyPose::neutral() }
    }

    #[test]
    fn each_builtin_succeeds_on_its_keyframes() {
        for tpl in builtin_templates() {
            let frames = perform(&keyframe_poses(&tpl.name).unwrap(), 1200);
            let r = match_gesture(&frames, &tpl, &MatchConfig::default()).unwrap();
            assert_eq!(r.status, MatchStatus::Success, "{}", tpl.name);
            assert_eq!(r.chirality, Chirality::Direct);
            assert_eq!(r.keyframes_matched(), tpl.keyframes.len());
            assert!(r.best_similarity.iter().flatten().all(|s| *s > 0.95));
        }
    }

    #[test]
    fn short_hold_is_not_enough() {
        let tpl = builtin_templates().remove(0);
        let frames = perform(&keyframe_poses(&tpl.name).unwrap(), 300);
        let r = match_gesture(&frames, &tpl, &MatchConfig::default()).unwrap();
        assert_eq!(r.status, MatchStatus::AttemptFailed);
    }

    #[test]
    fn keyframes_must_come_in_order() {
        let tpl = builtin_templates().remove(2);
        let mut poses = keyframe_poses(&tpl.name).unwrap();
        poses.reverse();
        let r = match_gesture(&perform(&poses, 1200), &tpl, &MatchConfig::default()).unwrap();
        assert_eq!(r.status, MatchStatus::AttemptFailed);
        assert_eq!(r.keyframes_matched(), 1);
    }

    #[test]
    fn mirrored_performance_of_asymmetric_gesture() {
        let tpl = raise_right_arm();
        let left_up = BodyPose { left: ArmPose::overhead(), ..BodyPose::neutral() };
        let direct = match_gesture(&perform(&[right_arm_up()], 1000), &tpl, &MatchConfig::default()).unwrap();
        assert_eq!((direct.status, direct.chirality), (MatchStatus::Success, Chirality::Direct));
        let mirror = match_gesture(&perform(&[left_up], 1000), &tpl, &MatchConfig::default()).unwrap();
        assert_eq!((mirror.status, mirror.chirality), (MatchStatus::Success, Chirality::Mirrored));
    }

    #[test]
    fn stillness_is_no_attempt() {
        let tpl = builtin_templates().remove(0);
        let frames: Vec<_> = (0..100).map(|i| frame(i * DT, &BodyPose::neutral())).collect();
        let r = match_gesture(&frames, &tpl, &MatchConfig::default()).unwrap();
        assert_eq!(r.status, MatchStatus::NoAttempt);
        assert_eq!(r.energy, 0.0);
    }

    #[test]
    fn hidden_arms_make_an_attempt_unscoreable() {
        let tpl = builtin_templates().remove(0);
        let frames: Vec<_> = perform(&keyframe_poses(&tpl.name).unwrap(), 300)
            .into_iter()
            .map(|f| {
                let mut p = f.pose.unwrap();
                p.joints[JointId::RWrist.index()].visible = false;
                FeatureFrame::new(f.t_ms, Some(p))
            })
            .collect();
        let r = match_gesture(&frames, &tpl, &MatchConfig::default()).unwrap();
        assert_eq!(r.status, MatchStatus::Unscoreable);
    }

    #[test]
    fn success_outranks_unscoreable() {
        let tpl = builtin_templates().remove(0);
        let mut frames = perform(&keyframe_poses(&tpl.name).unwrap(), 1200);
        let t0 = frames.last().unwrap().t_ms;
        frames.extend((1..200).map(|i| FeatureFrame::absent(t0 + i * DT)));
        let r = match_gesture(&frames, &tpl, &MatchConfig::default()).unwrap();
        assert_eq!(r.status, MatchStatus::Success);
    }

    #[test]
    fn frames_after_timeout_are_ignored() {
        let mut tpl = builtin_templates().remove(0);
        tpl.timeout_ms = 500;
        let r = match_gesture(&perform(&keyframe_poses(&tpl.name).unwrap(), 1200), &tpl, &MatchConfig::default())
            .unwrap();
        assert_ne!(r.status, MatchStatus::Success);
        assert_eq!(r.frames, 8);
    }

    #[test]
    fn stream_errors() {
        let tpl = builtin_templates().remove(0);
        assert_eq!(match_gesture(&[], &tpl, &MatchConfig::default()), Err(MatchError::EmptyStream));
        let f = frame(100, &BodyPose::neutral());
        assert_eq!(
            match_gesture(&[f, f], &tpl, &MatchConfig::default()),
            Err(MatchError::NonIncreasing { prev: 100, got: 100 })
        );
    }

    #[test]
    fn brief_attempt_in_a_long_window_counts_as_trying() {
        let tpl = builtin_templates().remove(0);
        let one_arm = BodyPose { right: ArmPose::overhead(), ..BodyPose::neutral() };
        let mut frames = perform(&[one_arm], 1200);
        let t0 = frames.last().unwrap().t_ms;
        let still = frame(0, &BodyPose::neutral());
        frames.extend((1..250).map(|i| FeatureFrame { t_ms: t0 + i * DT, ..still }));
        let r = match_gesture(&frames, &tpl, &MatchConfig::default()).unwrap();
        assert_eq!(r.status, MatchStatus::AttemptFailed);
        assert!(r.energy > 0.02, "{}", r.energy);
    }

    #[test]
    fn angle_targets_ignore_distance_constraints() {
        let tpl = builtin_templates().remove(2);
        let t = tpl.keyframes[1].target_features();
        assert_eq!(t.scalar(Scalar::TorsoIncline), Some(1.0));
        assert_eq!(t.scalar(Scalar::RWristDrop), None);
    }
}
