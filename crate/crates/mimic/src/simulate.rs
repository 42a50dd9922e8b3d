//! Synthetic pose streams rendered from scenario scripts.
//!
//! Gestures interpolate between the analytic keyframe poses of the built-in
//! templates, so a noise-free performance holds exactly the poses the
//! templates were written for.

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use mimic_core::gesture::Chirality;
use mimic_core::pose::{Frame, FrameSource, JointId, Keypoint, Limb, Skeleton};
use mimic_core::scene::Side;
use mimic_core::session::SessionEvent;
use mimic_core::synth::{keyframe_poses, ArmPose, BodyPose, Placement};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::scenario::{Action, Actor, Arms, Scenario, ScenarioError};

/// Time to move into a keyframe pose, at speed 1.
pub const RAMP_MS: f64 = 800.0;
/// Time a keyframe pose is held, at speed 1.
pub const HOLD_MS: f64 = 1200.0;
pub const TORSO_PX: f64 = 100.0;
const HIP_Y: f64 = 260.0;
const NEAR_SIDE_X: f64 = 180.0;
const FAR_SIDE_X: f64 = 460.0;
const WALL: (f64, f64) = (590.0, 60.0);

#[derive(Debug, Clone, PartialEq)]
pub struct Simulation {
    pub frames: Vec<Frame>,
    /// Operator observations and commands, in script order.
    pub events: Vec<SessionEvent>,
}

/// Image placement of each actor for a given model side.
pub fn placements(model_on: Side) -> (Placement, Placement) {
    let (model_x, participant_x) = match model_on {
        Side::Left => (NEAR_SIDE_X, FAR_SIDE_X),
        Side::Right => (FAR_SIDE_X, NEAR_SIDE_X),
    };
    let at = |hip_x| Placement { hip_x, hip_y: HIP_Y, torso_px: TORSO_PX };
    (at(participant_x), at(model_x))
}

/// Duration of one performance of `gesture` at `speed`.
pub fn perform_duration_ms(gesture: &str, speed: f64) -> Option<f64> {
    let n = keyframe_poses(gesture)?.len() as f64;
    Some((n * (RAMP_MS + HOLD_MS) + RAMP_MS) / speed)
}

#[derive(Debug, Clone)]
enum Motion {
    Perform { poses: Vec<BodyPose>, speed: f64, mirrored: bool, noise: Option<f64> },
    Hide(Vec<Limb>),
    Wave { period_ms: f64, amplitude: f64, arm: Arms },
    Fidget { amplitude: f64, phases: [f64; 4] },
}

#[derive(Debug, Clone)]
struct Span {
    start: f64,
    end: f64,
    motion: Motion,
}

#[derive(Debug, Default)]
struct Timeline {
    spans: Vec<Span>,
}

fn smoothstep(x: f64) -> f64 {
    let x = x.clamp(0.0, 1.0);
    x * x * (3.0 - 2.0 * x)
}

fn perform_pose(poses: &[BodyPose], tau: f64) -> BodyPose {
    let neutral = BodyPose::neutral();
    let mut from = neutral;
    let mut t = tau;
    for p in poses {
        if t < RAMP_MS {
            return BodyPose::lerp(&from, p, smoothstep(t / RAMP_MS));
        }
        t -= RAMP_MS;
        if t < HOLD_MS {
            return *p;
        }
        t -= HOLD_MS;
        from = *p;
    }
    BodyPose::lerp(&from, &neutral, smoothstep(t / RAMP_MS))
}

/// What an actor looks like at one instant.
struct Look {
    pose: BodyPose,
    mirrored: bool,
    hidden: Vec<Limb>,
    noise: Option<f64>,
}

impl Timeline {
    fn look(&self, t: f64) -> Look {
        let mut look = Look { pose: BodyPose::neutral(), mirrored: false, hidden: Vec::new(), noise: None };
        for span in self.spans.iter().filter(|s| s.start <= t && t < s.end) {
            let tau = t - span.start;
            match &span.motion {
                Motion::Perform { poses, speed, mirrored, noise } => {
                    look.pose = perform_pose(poses, tau * speed);
                    look.mirrored = *mirrored;
                    look.noise = *noise;
                }
                Motion::Hide(limbs) => look.hidden.extend(limbs),
                Motion::Wave { period_ms, amplitude, arm } => {
                    let elevation = FRAC_PI_2 + amplitude * (TAU * tau / period_ms).sin();
                    let swing = ArmPose::new(elevation, 0.0, PI);
                    match arm {
                        Arms::Right => look.pose.right = swing,
                        Arms::Left => look.pose.left = swing,
                        Arms::Both => {
                            look.pose.right = swing;
                            look.pose.left = swing;
                        }
                    }
                }
                Motion::Fidget { amplitude, phases } => {
                    let wobble = |period: f64, phase: f64| (TAU * tau / period + phase).sin();
                    let r = 0.4 + amplitude * (0.6 * wobble(700.0, phases[0]) + 0.4 * wobble(1130.0, phases[1]));
                    let l = 0.4 + amplitude * (0.6 * wobble(810.0, phases[2]) + 0.4 * wobble(1270.0, phases[3]));
                    look.pose.right = ArmPose::new(r, 0.0, PI - 0.5 * amplitude * (1.0 + wobble(930.0, phases[1])));
                    look.pose.left = ArmPose::new(l, 0.0, PI - 0.5 * amplitude * (1.0 + wobble(990.0, phases[2])));
                    look.pose.torso_incline = 0.08 * wobble(900.0, phases[3]).abs();
                }
            }
        }
        look
    }
}

fn shaped(pose: BodyPose, amplitude: f64, arms: Arms) -> BodyPose {
    let neutral = BodyPose::neutral();
    let mut p = BodyPose::lerp(&neutral, &pose, amplitude);
    match arms {
        Arms::Both => {}
        Arms::Right => p.left = neutral.left,
        Arms::Left => p.right = neutral.right,
    }
    p
}

fn jitter(s: &Skeleton, sigma_px: f64, rng: &mut ChaCha8Rng) -> Skeleton {
    let normal = Normal::new(0.0, sigma_px).expect("finite sigma");
    let mut joints = *s.joints();
    for k in joints.iter_mut() {
        if k.confidence > 0.0 {
            *k = Keypoint::new(k.x + normal.sample(rng), k.y + normal.sample(rng), k.confidence);
        }
    }
    Skeleton::new(joints).expect("jitter keeps visibility")
}

/// Joints removed when a limb is hidden. Arms and legs lose their distal
/// joints only, so the shoulders and hips that anchor the torso survive.
pub fn hidden_joints(limb: Limb) -> &'static [JointId] {
    use JointId::*;
    match limb {
        Limb::Head => &[Nose, REye, LEye, REar, LEar],
        Limb::Torso => &[Neck, RHip, LHip],
        Limb::RArm => &[RElbow, RWrist],
        Limb::LArm => &[LElbow, LWrist],
        Limb::RLeg => &[RKnee, RAnkle],
        Limb::LLeg => &[LKnee, LAnkle],
    }
}

fn hide(s: &Skeleton, limbs: &[Limb]) -> Option<Skeleton> {
    let joints: Vec<JointId> = limbs.iter().flat_map(|l| hidden_joints(*l).iter().copied()).collect();
    let out = s.with_hidden(&joints);
    (out.visible_count(0.0) > 0).then_some(out)
}

/// Renders the scenario at its frame rate. Deterministic for a given seed.
pub fn simulate(script: &Scenario, seed: u64) -> Result<Simulation, ScenarioError> {
    script.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut participant = Timeline::default();
    let mut model = Timeline::default();
    let mut wall: Vec<(f64, f64, f64)> = Vec::new();
    let mut events = Vec::new();

    for (index, e) in script.entries.iter().enumerate() {
        let start = e.at_ms as f64;
        let timeline = match e.actor {
            Actor::Participant => &mut participant,
            Actor::Model => &mut model,
        };
        let span = |end: f64, motion| Span { start, end, motion };
        match &e.action {
            Action::Perform { gesture, chirality, noise, speed, amplitude, arms } => {
                let poses = keyframe_poses(gesture)
                    .ok_or_else(|| ScenarioError::UnknownGesture { index, name: gesture.clone() })?
                    .into_iter()
                    .map(|p| shaped(p, *amplitude, *arms))
                    .collect();
                let end = start + perform_duration_ms(gesture, *speed).expect("known gesture");
                let mirrored = *chirality == Chirality::Mirrored;
                timeline.spans.push(span(end, Motion::Perform { poses, speed: *speed, mirrored, noise: *noise }));
            }
            Action::Idle { .. } => {}
            Action::Hide { limbs, duration_ms } => {
                timeline.spans.push(span(start + *duration_ms as f64, Motion::Hide(limbs.clone())));
            }
            Action::Wave { period_ms, duration_ms, amplitude, arm } => {
                let motion = Motion::Wave { period_ms: *period_ms as f64, amplitude: *amplitude, arm: *arm };
                timeline.spans.push(span(start + *duration_ms as f64, motion));
            }
            Action::Fidget { duration_ms, amplitude } => {
                let phases = [(); 4].map(|_| rng.random_range(0.0..TAU));
                timeline.spans.push(span(start + *duration_ms as f64, Motion::Fidget { amplitude: *amplitude, phases }));
            }
            Action::Observe { observation } => events.push(SessionEvent::observation(e.at_ms, *observation)),
            Action::Command { command } => events.push(SessionEvent::command(e.at_ms, *command)),
            Action::FalsePositive { height_ratio, duration_ms } => {
                wall.push((start, start + *duration_ms as f64, *height_ratio));
            }
        }
    }

    let (p_place, m_place) = placements(script.model_on);
    let mut frames = Vec::new();
    for i in 0u64.. {
        let t = crate::replay::frame_timestamp(i as usize, script.fps);
        if t > script.duration_ms {
            break;
        }
        let tf = t as f64;
        let mut skeletons = Vec::new();
        for (timeline, place) in [(&model, &m_place), (&participant, &p_place)] {
            let look = timeline.look(tf);
            let mut s = look.pose.render(place);
            if look.mirrored {
                s = s.mirror();
            }
            let sigma = look.noise.unwrap_or(script.noise);
            if sigma > 0.0 {
                s = jitter(&s, sigma * place.torso_px, &mut rng);
            }
            if let Some(s) = hide(&s, &look.hidden) {
                skeletons.push(s);
            }
        }
        for (start, end, ratio) in &wall {
            if *start <= tf && tf < *end {
                let place = Placement { hip_x: WALL.0, hip_y: WALL.1, torso_px: TORSO_PX * ratio };
                skeletons.push(BodyPose::neutral().render(&place));
            }
        }
        frames.push(Frame { timestamp_ms: t, skeletons, source: FrameSource::Simulated });
    }
    Ok(Simulation { frames, events })
}
