//! Per-frame processing around one session: scene filtering, tracking and
//! roles, the gesture matcher during demonstrations, mirror commands and
//! motion suggestions during mirroring, and model-visibility warnings.
//!
//! Everything the pipeline learns is fed to the engine as timestamped
//! events, so the session log alone replays to the same outcomes.

use mimic_core::gesture::{
    activity_changed, mirror_pose_command, motion_stats, FeatureFrame, GestureMatcher, GestureTemplate, MatchConfig,
    MatchStatus, MotionStats, PoseCommand, DEFAULT_RHYTHM_CHANGE_RATIO,
};
use mimic_core::pose::{Frame, Limb, LimbSet, Skeleton};
use mimic_core::scene::{
    assign_roles, reject_false_positives, track, visibility, Role, RolePolicy, Side, TrackId, TrackerConfig,
    TrackerState, VisibilityReport, DEFAULT_MAX_JUMP, DEFAULT_MIN_COVERAGE, DEFAULT_MIN_HEIGHT_RATIO,
    DEFAULT_TRACK_TTL_MS,
};
use mimic_core::session::{
    AlgorithmEvent, Command, EngineError, EngineStatus, ImitationMode, Output, Payload, Phase, Session, SessionEvent,
};
use mimic_core::DEFAULT_CONF_MIN;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoleMode {
    /// Model and participant are told apart by image side.
    BySide,
    /// Only the operator assigns roles.
    ByOperator,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneConfig {
    pub conf_min: f64,
    pub min_height_ratio: f64,
    pub min_coverage: f64,
    pub max_jump: f64,
    pub track_ttl_ms: u64,
    pub role_policy: RoleMode,
    pub model_on: Side,
}

impl Default for SceneConfig {
    fn default() -> Self {
        SceneConfig {
            conf_min: DEFAULT_CONF_MIN,
            min_height_ratio: DEFAULT_MIN_HEIGHT_RATIO,
            min_coverage: DEFAULT_MIN_COVERAGE,
            max_jump: DEFAULT_MAX_JUMP,
            track_ttl_ms: DEFAULT_TRACK_TTL_MS,
            role_policy: RoleMode::BySide,
            model_on: Side::Left,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MotionConfig {
    /// Length of each mirroring window that motion statistics cover.
    pub window_ms: u64,
    pub rhythm_change_ratio: f64,
    /// Energies below this are treated as this, so stillness does not
    /// produce huge ratios.
    pub energy_floor: f64,
}

impl Default for MotionConfig {
    fn default() -> Self {
        MotionConfig { window_ms: 3000, rhythm_change_ratio: DEFAULT_RHYTHM_CHANGE_RATIO, energy_floor: 0.005 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VisibilityConfig {
    /// Model limbs that must stay detectable.
    pub model_limbs: Vec<Limb>,
    /// How long they may be missing before the operator is warned.
    pub warn_after_ms: u64,
}

impl Default for VisibilityConfig {
    fn default() -> Self {
        VisibilityConfig { model_limbs: vec![Limb::Torso], warn_after_ms: 2000 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub scene: SceneConfig,
    /// One template per movement, in session order.
    pub templates: Vec<GestureTemplate>,
    pub matcher: MatchConfig,
    pub motion: MotionConfig,
    pub visibility: VisibilityConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            scene: SceneConfig::default(),
            templates: mimic_core::gesture::builtin_templates(),
            matcher: MatchConfig::default(),
            motion: MotionConfig::default(),
            visibility: VisibilityConfig::default(),
        }
    }
}

/// One person in a filtered frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenePerson {
    pub track: TrackId,
    pub role: Role,
    pub skeleton: Skeleton,
    pub visibility: VisibilityReport,
}

/// A frame after false-positive rejection, with tracks and roles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneFrame {
    pub t_ms: u64,
    pub people: Vec<ScenePerson>,
    /// Skeletons rejected as false positives.
    pub rejected: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PipelineOutput {
    Engine(Output),
    Frame(SceneFrame),
    /// Pose the model should show while mirroring.
    MirrorCommand { t_ms: u64, command: PoseCommand },
}

struct ActiveMatch {
    movement: u8,
    deadline: u64,
    matcher: GestureMatcher,
    reported: bool,
}

#[derive(Default)]
struct MirrorWatch {
    movement: Option<u8>,
    frames: Vec<FeatureFrame>,
    window_start: u64,
    prev: Option<MotionStats>,
}

#[derive(Default)]
struct VisibilityWatch {
    since: Option<u64>,
    warned: bool,
}

pub struct Pipeline {
    session: Session,
    config: PipelineConfig,
    tracker: TrackerState,
    active: Option<ActiveMatch>,
    mirror: MirrorWatch,
    model_seen: bool,
    model_watch: VisibilityWatch,
    outputs: Vec<PipelineOutput>,
}

impl Pipeline {
    pub fn new(session: Session, config: PipelineConfig) -> Self {
        let mut p = Pipeline {
            session,
            config,
            tracker: TrackerState::default(),
            active: None,
            mirror: MirrorWatch::default(),
            model_seen: false,
            model_watch: VisibilityWatch::default(),
            outputs: Vec::new(),
        };
        p.drain();
        p
    }

    pub fn session(&self) -> &Session {
        &self.session
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn tracker(&self) -> &TrackerState {
        &self.tracker
    }

    pub fn is_running(&self) -> bool {
        self.session.status() == EngineStatus::Running
    }

    pub fn take_outputs(&mut self) -> Vec<PipelineOutput> {
        std::mem::take(&mut self.outputs)
    }

    fn drain(&mut self) {
        self.outputs.extend(self.session.take_outputs().into_iter().map(PipelineOutput::Engine));
    }

    fn feed(&mut self, event: SessionEvent) -> Result<(), EngineError> {
        let r = self.session.step(event);
        self.drain();
        r
    }

    /// Reports the matcher's verdict before the window it belongs to closes.
    fn flush_verdict(&mut self, t: u64) {
        let Some(a) = self.active.take() else { return };
        if a.reported || !self.is_running() {
            return;
        }
        if let Ok(result) = a.matcher.result() {
            let payload = if result.status == MatchStatus::Success {
                AlgorithmEvent::GestureMatched { movement: a.movement, result }
            } else {
                AlgorithmEvent::GestureFailed { movement: a.movement, result }
            };
            let _ = self.feed(SessionEvent::new(t, Payload::Algorithm(payload)));
        }
    }

    /// Flushes a verdict whose window closes by `t`.
    fn before(&mut self, t: u64) {
        if let Some(a) = &self.active {
            if a.deadline <= t {
                let at = a.deadline.saturating_sub(1).max(self.session.clock());
                self.flush_verdict(at);
            }
        }
    }

    /// Applies an operator or script event.
    pub fn push_event(&mut self, event: SessionEvent) -> Result<(), EngineError> {
        self.before(event.t_ms);
        match &event.payload {
            Payload::Command(Command::AdvancePhase | Command::StartMirroring) => self.flush_verdict(event.t_ms),
            Payload::Command(Command::ReDemonstrate) => self.active = None,
            _ => {}
        }
        let assign = match &event.payload {
            Payload::Command(Command::AssignRole { track, role }) => Some((*track, *role)),
            _ => None,
        };
        self.feed(event)?;
        if let Some((track, role)) = assign {
            match assign_roles(self.tracker.tracks.clone(), RolePolicy::ByOperator { track, role }) {
                Ok(tracks) => self.tracker.tracks = tracks,
                // Logged by the engine all the same; the track has gone.
                Err(e) => tracing::warn!("role assignment ignored: {e}"),
            }
        }
        Ok(())
    }

    /// Advances the engine clock without a frame.
    pub fn tick(&mut self, t: u64) {
        self.before(t);
        if self.is_running() {
            let _ = self.feed(SessionEvent::tick(t));
        }
    }

    /// Processes one camera frame.
    pub fn push_frame(&mut self, frame: &Frame) {
        let t = frame.timestamp_ms;
        self.tick(t);
        let sc = self.config.scene;
        let filtered = reject_false_positives(frame, sc.min_height_ratio, sc.min_coverage, sc.conf_min);
        let tc = TrackerConfig { max_jump: sc.max_jump, track_ttl_ms: sc.track_ttl_ms, conf_min: sc.conf_min };
        self.tracker = track(std::mem::take(&mut self.tracker), &filtered, &tc);
        if sc.role_policy == RoleMode::BySide {
            if let Ok(tracks) = assign_roles(self.tracker.tracks.clone(), RolePolicy::BySide { model_on: sc.model_on }) {
                self.tracker.tracks = tracks;
            }
        }
        let people: Vec<ScenePerson> = self
            .tracker
            .tracks
            .iter()
            .filter(|p| p.last_seen == t)
            .map(|p| ScenePerson {
                track: p.track_id,
                role: p.role,
                skeleton: p.last_skeleton,
                visibility: visibility(&p.last_skeleton, sc.conf_min),
            })
            .collect();
        let rejected = frame.skeletons.len() - filtered.skeletons.len();

        if self.is_running() {
            let participant = people.iter().find(|p| p.role == Role::Participant).map(|p| p.skeleton);
            let ff = match &participant {
                Some(s) => FeatureFrame::from_skeleton(t, s, sc.conf_min),
                None => FeatureFrame::absent(t),
            };
            self.match_frame(&ff);
            self.mirror_frame(&ff, participant.as_ref());
            let model = people.iter().find(|p| p.role == Role::Model).map(|p| p.visibility);
            self.watch_model(t, model);
        }
        self.outputs.push(PipelineOutput::Frame(SceneFrame { t_ms: t, people, rejected }));
    }

    fn match_frame(&mut self, ff: &FeatureFrame) {
        let (Phase::Imitation { movement, mode: ImitationMode::Demonstrate, .. }, Some(deadline)) =
            (self.session.phase(), self.session.deadline())
        else {
            self.active = None;
            return;
        };
        let stale = self.active.as_ref().is_none_or(|a| a.movement != movement || a.deadline != deadline);
        if stale {
            let Some(template) = self.config.templates.get(movement as usize) else { return };
            let matcher = GestureMatcher::new(template.clone(), self.config.matcher);
            self.active = Some(ActiveMatch { movement, deadline, matcher, reported: false });
        }
        let a = self.active.as_mut().expect("matcher just ensured");
        if a.matcher.push(ff).is_err() || a.reported || !a.matcher.succeeded() {
            return;
        }
        a.reported = true;
        if let Ok(result) = a.matcher.result() {
            let ev = AlgorithmEvent::GestureMatched { movement, result };
            let _ = self.feed(SessionEvent::new(ff.t_ms, Payload::Algorithm(ev)));
        }
    }

    fn mirror_frame(&mut self, ff: &FeatureFrame, participant: Option<&Skeleton>) {
        let Phase::Imitation { movement, mode: ImitationMode::Mirroring, .. } = self.session.phase() else {
            self.mirror = MirrorWatch::default();
            return;
        };
        if self.mirror.movement != Some(movement) {
            self.mirror = MirrorWatch { movement: Some(movement), window_start: ff.t_ms, ..MirrorWatch::default() };
        }
        if let Some(cmd) = participant.and_then(|s| mirror_pose_command(s, self.config.scene.conf_min).ok()) {
            self.outputs.push(PipelineOutput::MirrorCommand { t_ms: ff.t_ms, command: cmd });
        }
        self.mirror.frames.push(*ff);
        let mc = self.config.motion;
        if ff.t_ms.saturating_sub(self.mirror.window_start) < mc.window_ms {
            return;
        }
        let frames = std::mem::take(&mut self.mirror.frames);
        self.mirror.window_start = ff.t_ms;
        self.mirror.frames.push(*ff);
        let Ok(stats) = motion_stats(&frames) else { return };
        let changed = self
            .mirror
            .prev
            .as_ref()
            .is_some_and(|prev| activity_changed(prev, &stats, mc.rhythm_change_ratio, mc.energy_floor));
        self.mirror.prev = Some(stats);
        if changed {
            let ev = AlgorithmEvent::ActivityChange { stats };
            let _ = self.feed(SessionEvent::new(ff.t_ms, Payload::Algorithm(ev)));
        }
    }

    fn watch_model(&mut self, t: u64, model: Option<VisibilityReport>) {
        let required = LimbSet::from_limbs(&self.config.visibility.model_limbs);
        let missing = match model {
            Some(v) => {
                self.model_seen = true;
                let mut m = LimbSet::EMPTY;
                for l in required.iter().filter(|l| !v.limb(*l)) {
                    m.insert(l);
                }
                m
            }
            None if self.model_seen => required,
            None => LimbSet::EMPTY,
        };
        if missing.is_empty() {
            self.model_watch = VisibilityWatch::default();
            return;
        }
        let since = *self.model_watch.since.get_or_insert(t);
        if !self.model_watch.warned && t.saturating_sub(since) >= self.config.visibility.warn_after_ms {
            self.model_watch.warned = true;
            let ev = AlgorithmEvent::VisibilityWarning { role: Role::Model, missing };
            let _ = self.feed(SessionEvent::new(t, Payload::Algorithm(ev)));
        }
    }

    /// Ticks the engine forward until the session ends. Every pending timer
    /// is finite, so this terminates.
    pub fn run_out(&mut self) {
        while self.is_running() {
            let snap = self.session.snapshot();
            let next = snap
                .deadline_ms
                .unwrap_or_else(|| snap.entered_at.saturating_add(self.session.config().prompt_timeout_ms));
            self.tick(next.max(self.session.clock() + 1));
        }
    }
}

/// Feeds frames and operator events in time order (events first on ties),
/// then runs the session out.
pub fn run_headless<I>(pipeline: &mut Pipeline, frames: I, events: &[SessionEvent]) -> Result<(), HeadlessError>
where
    I: IntoIterator<Item = Result<Frame, crate::replay::ReplayError>>,
{
    let mut pending = events.iter().peekable();
    for frame in frames {
        let frame = frame?;
        while let Some(e) = pending.next_if(|e| e.t_ms <= frame.timestamp_ms) {
            if pipeline.is_running() {
                pipeline.push_event(e.clone()).map_err(|source| HeadlessError::Event { t_ms: e.t_ms, source })?;
            }
        }
        pipeline.push_frame(&frame);
    }
    for e in pending {
        if pipeline.is_running() {
            pipeline.push_event(e.clone()).map_err(|source| HeadlessError::Event { t_ms: e.t_ms, source })?;
        }
    }
    pipeline.run_out();
    Ok(())
}

#[derive(Debug, thiserror::Error)]
pub enum HeadlessError {
    #[error(transparent)]
    Frames(#[from] crate::replay::ReplayError),
    #[error("scripted event at {t_ms} ms rejected: {source}")]
    Event { t_ms: u64, source: EngineError },
}
