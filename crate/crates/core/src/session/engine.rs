use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::scoring::{aggregate_imitation, score_greetings, score_imitation_movement, score_mirroring, score_pairing};
use super::{
    AlgorithmEvent, Code, Command, EngineError, ImitationMode, LogEntry, Observation, Payload, Phase, PhaseKind,
    PhaseOutcome, RubricConfig, SessionEvent, MOVEMENT_COUNT,
};
use crate::gesture::{MatchResult, MotionStats, MatchStatus};
use crate::scene::{Role, TrackId};

/// Lookup of registered participants.
pub trait ParticipantDirectory {
    fn is_registered(&self, participant_id: &str) -> bool;
}

impl ParticipantDirectory for BTreeSet<String> {
    fn is_registered(&self, participant_id: &str) -> bool {
        self.contains(participant_id)
    }
}

impl ParticipantDirectory for [&str] {
    fn is_registered(&self, participant_id: &str) -> bool {
        self.contains(&participant_id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EngineStatus {
    Running,
    Completed,
    Aborted,
}

/// Everything the engine tells the outside world, in order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Output {
    /// An entry was appended to the session log.
    Logged(LogEntry),
    PhaseEntered { phase: Phase, t_ms: u64 },
    WindowArmed { phase: Phase, armed_at: u64, deadline_ms: u64 },
    Outcome(PhaseOutcome),
    /// Start or stop streaming mirror-pose commands to the model.
    MirroringActive { movement: u8, active: bool, t_ms: u64 },
    /// Advisory for the operator; never scored.
    Suggestion { movement: u8, stats: MotionStats, t_ms: u64 },
    Warning { message: String, t_ms: u64 },
    RoleAssignment { track: TrackId, role: Role, t_ms: u64 },
    SessionEnded { status: EngineStatus, t_ms: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSnapshot {
    pub session_id: String,
    pub participant_id: String,
    pub phase: Phase,
    pub clock_ms: u64,
    pub entered_at: u64,
    /// End of the armed window, if any.
    pub deadline_ms: Option<u64>,
    pub outcomes: Vec<PhaseOutcome>,
    pub status: EngineStatus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Window {
    armed_at: u64,
    deadline: u64,
}

/// One running session. Feed it events with [`Session::step`] and collect
/// what happened with [`Session::take_outputs`].
#[derive(Debug, Clone)]
pub struct Session {
    session_id: String,
    participant_id: String,
    config: RubricConfig,
    started_at: u64,
    clock: u64,
    phase: Phase,
    entered_at: u64,
    window: Option<Window>,
    observations: Vec<(u64, Observation)>,
    last_match: Option<(u64, MatchResult)>,
    with_objects: bool,
    mirroring_triggered: bool,
    outcomes: Vec<PhaseOutcome>,
    warnings: Vec<String>,
    status: EngineStatus,
    log: Vec<LogEntry>,
    outbox: Vec<Output>,
}

/// Opens a session in the greetings phase. The wait window is not armed
/// until the operator signals that the prompt was delivered.
pub fn start_session<D: ParticipantDirectory + ?Sized>(
    directory: &D,
    session_id: &str,
    participant_id: &str,
    config: RubricConfig,
    t_ms: u64,
) -> Result<Session, EngineError> {
    if !directory.is_registered(participant_id) {
        return Err(EngineError::UnknownParticipant(participant_id.into()));
    }
    Session::new(session_id, participant_id, config, t_ms)
}

/// Rebuilds a session by feeding its log back through the engine.
pub fn replay(
    session_id: &str,
    participant_id: &str,
    config: RubricConfig,
    started_at: u64,
    log: &[LogEntry],
) -> Result<Session, EngineError> {
    let mut s = Session::new(session_id, participant_id, config, started_at)?;
    for entry in log {
        s.step(SessionEvent::new(entry.t_ms, entry.payload.clone()))?;
    }
    Ok(s)
}

impl Session {
    fn new(session_id: &str, participant_id: &str, config: RubricConfig, t_ms: u64) -> Result<Self, EngineError> {
        config.validate()?;
        let mut s = Session {
            session_id: session_id.into(),
            participant_id: participant_id.into(),
            config,
            started_at: t_ms,
            clock: t_ms,
            phase: Phase::Greetings,
            entered_at: t_ms,
            window: None,
            observations: Vec::new(),
            last_match: None,
            with_objects: false,
            mirroring_triggered: false,
            outcomes: Vec::new(),
            warnings: Vec::new(),
            status: EngineStatus::Running,
            log: Vec::new(),
            outbox: Vec::new(),
        };
        s.outbox.push(Output::PhaseEntered { phase: s.phase, t_ms });
        Ok(s)
    }

    pub fn session_id(&self) -> &str {
        &self.session_id
    }

    pub fn participant_id(&self) -> &str {
        &self.participant_id
    }

    pub fn config(&self) -> &RubricConfig {
        &self.config
    }

    pub fn started_at(&self) -> u64 {
        self.started_at
    }

    pub fn clock(&self) -> u64 {
        self.clock
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn status(&self) -> EngineStatus {
        self.status
    }

    pub fn outcomes(&self) -> &[PhaseOutcome] {
        &self.outcomes
    }

    pub fn log(&self) -> &[LogEntry] {
        &self.log
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn with_objects(&self) -> bool {
        self.with_objects
    }

    pub fn mirroring_triggered(&self) -> bool {
        self.mirroring_triggered
    }

    /// End of the armed window, if one is running.
    pub fn deadline(&self) -> Option<u64> {
        self.window.map(|w| w.deadline)
    }

    /// Phase-level code (per-movement codes excluded).
    pub fn code(&self, phase: PhaseKind) -> Option<Code> {
        self.outcomes
            .iter()
            .find(|o| o.phase == phase && o.movement.is_none())
            .map(|o| o.code)
    }

    pub fn snapshot(&self) -> SessionSnapshot {
        SessionSnapshot {
            session_id: self.session_id.clone(),
            participant_id: self.participant_id.clone(),
            phase: self.phase,
            clock_ms: self.clock,
            entered_at: self.entered_at,
            deadline_ms: self.deadline(),
            outcomes: self.outcomes.clone(),
            status: self.status,
        }
    }

    pub fn take_outputs(&mut self) -> Vec<Output> {
        core::mem::take(&mut self.outbox)
    }

    /// Applies one event. Timestamps behind the engine clock are moved up to
    /// it. Timers due by the event's time fire first.
    pub fn step(&mut self, event: SessionEvent) -> Result<(), EngineError> {
        if self.status != EngineStatus::Running {
            return Err(EngineError::SessionEnded);
        }
        let t = event.t_ms.max(self.clock);
        let fired = self.advance_clock(t);
        if fired {
            self.append(Payload::Tick);
        }
        if event.payload == Payload::Tick {
            return Ok(());
        }
        if self.status != EngineStatus::Running {
            return Err(EngineError::SessionEnded);
        }
        if let Payload::Command(c) = &event.payload {
            self.check_command(c)?;
        }
        let seq = self.append(event.payload.clone());
        match event.payload {
            Payload::Observation(o) => {
                if self.window.is_some() {
                    self.observations.push((seq, o));
                }
            }
            Payload::Algorithm(a) => self.apply_algorithm(seq, a),
            Payload::Command(c) => self.apply_command(c),
            Payload::Tick => {}
        }
        Ok(())
    }

    pub fn tick(&mut self, t_ms: u64) -> Result<(), EngineError> {
        self.step(SessionEvent::tick(t_ms))
    }

    fn append(&mut self, payload: Payload) -> u64 {
        let entry = LogEntry { seq: self.log.len() as u64, t_ms: self.clock, phase: self.phase, payload };
        let seq = entry.seq;
        self.outbox.push(Output::Logged(entry.clone()));
        self.log.push(entry);
        seq
    }

    /// Moves the clock to `t`, firing every timer due on the way at its
    /// scheduled time. Returns whether anything fired.
    fn advance_clock(&mut self, t: u64) -> bool {
        self.clock = t;
        let mut fired = false;
        while self.status == EngineStatus::Running {
            match self.window {
                Some(w) if w.deadline <= t => self.close_window(w.deadline),
                Some(_) => break,
                None => {
                    let due = self.entered_at.saturating_add(self.config.prompt_timeout_ms);
                    if self.phase == Phase::Closing || due > t {
                        break;
                    }
                    self.arm(due);
                }
            }
            fired = true;
        }
        fired
    }

    fn window_len(&self) -> u64 {
        match self.phase {
            Phase::Greetings | Phase::Pairing | Phase::Closing => self.config.wait_window_ms,
            Phase::Imitation { mode: ImitationMode::Demonstrate, .. } => self.config.movement_window_ms,
            Phase::Imitation { mode: ImitationMode::Mirroring, .. } => self.config.mirroring_window_ms,
        }
    }

    fn arm(&mut self, at: u64) {
        let deadline = at.saturating_add(self.window_len());
        self.window = Some(Window { armed_at: at, deadline });
        self.outbox.push(Output::WindowArmed { phase: self.phase, armed_at: at, deadline_ms: deadline });
    }

    fn enter(&mut self, phase: Phase, at: u64) {
        self.phase = phase;
        self.entered_at = at;
        self.window = None;
        self.observations.clear();
        self.last_match = None;
        self.outbox.push(Output::PhaseEntered { phase, t_ms: at });
        if let Phase::Imitation { movement, mode: ImitationMode::Mirroring, .. } = phase {
            self.outbox.push(Output::MirroringActive { movement, active: true, t_ms: at });
            self.arm(at);
        }
    }

    fn record(&mut self, movement: Option<u8>, code: Code, evidence: Vec<u64>, at: u64) {
        let outcome = PhaseOutcome {
            phase: self.phase.kind(),
            movement,
            code,
            evidence,
            with_objects: self.with_objects,
            t_ms: at,
        };
        self.outbox.push(Output::Outcome(outcome.clone()));
        self.outcomes.push(outcome);
    }

    fn imitation_phase(&self, movement: u8, mode: ImitationMode) -> Phase {
        Phase::Imitation { movement, with_objects: self.with_objects, mode }
    }

    /// Scores the current window and moves on.
    fn close_window(&mut self, at: u64) {
        match self.phase {
            Phase::Greetings => {
                let s = score_greetings(&self.observations, &self.config.greetings_cues);
                self.record(None, s.code, s.evidence, at);
                self.enter(Phase::Pairing, at);
            }
            Phase::Pairing => {
                let s = score_pairing(&self.observations, &self.config.pairing_cues);
                self.record(None, s.code, s.evidence, at);
                let next = self.imitation_phase(0, ImitationMode::Demonstrate);
                self.enter(next, at);
            }
            Phase::Imitation { movement, mode: ImitationMode::Demonstrate, .. } => {
                let code = self.score_demonstration(movement, at);
                if code == Code::OneA {
                    self.start_mirroring(movement, at);
                } else {
                    self.next_movement(movement, at);
                }
            }
            Phase::Imitation { movement, mode: ImitationMode::Mirroring, .. } => {
                let s = score_mirroring(&self.observations);
                self.record(Some(movement), s.code, s.evidence, at);
                self.outbox.push(Output::MirroringActive { movement, active: false, t_ms: at });
                self.next_movement(movement, at);
            }
            Phase::Closing => self.window = None,
        }
    }

    fn score_demonstration(&mut self, movement: u8, at: u64) -> Code {
        let matched = self.last_match.as_ref().map(|(s, r)| (*s, r));
        if matched.is_some_and(|(_, r)| r.status == MatchStatus::Unscoreable) {
            self.warn(format!("movement {}: participant's arms not visible enough to score", movement + 1), at);
        }
        let s = score_imitation_movement(&self.observations, self.last_match.as_ref().map(|(s, r)| (*s, r)));
        self.record(Some(movement), s.code, s.evidence, at);
        s.code
    }

    fn start_mirroring(&mut self, movement: u8, at: u64) {
        self.mirroring_triggered = true;
        let next = self.imitation_phase(movement, ImitationMode::Mirroring);
        self.enter(next, at);
    }

    fn next_movement(&mut self, movement: u8, at: u64) {
        if movement + 1 < MOVEMENT_COUNT {
            let next = self.imitation_phase(movement + 1, ImitationMode::Demonstrate);
            self.enter(next, at);
            return;
        }
        if let Some(agg) = aggregate_imitation(&self.outcomes, at) {
            self.outbox.push(Output::Outcome(agg.clone()));
            self.outcomes.push(agg);
        }
        self.enter(Phase::Closing, at);
        self.finish(EngineStatus::Completed, at);
    }

    fn finish(&mut self, status: EngineStatus, at: u64) {
        self.status = status;
        self.window = None;
        self.outbox.push(Output::SessionEnded { status, t_ms: at });
    }

    fn warn(&mut self, message: String, at: u64) {
        self.warnings.push(message.clone());
        self.outbox.push(Output::Warning { message, t_ms: at });
    }

    fn check_command(&self, c: &Command) -> Result<(), EngineError> {
        let demonstrating = matches!(self.phase, Phase::Imitation { mode: ImitationMode::Demonstrate, .. });
        let legal = match c {
            Command::AdvancePhase => self.phase != Phase::Closing,
            Command::UseObjects => matches!(self.phase, Phase::Pairing | Phase::Imitation { .. }),
            Command::StartMirroring | Command::ReDemonstrate => demonstrating,
            Command::AssignRole { .. } | Command::Abort => true,
        };
        if legal {
            Ok(())
        } else {
            Err(EngineError::IllegalTransition { command: c.name(), phase: self.phase.kind() })
        }
    }

    fn apply_command(&mut self, c: Command) {
        let now = self.clock;
        match c {
            Command::AdvancePhase => match self.window {
                None => self.arm(now),
                Some(_) => self.close_window(now),
            },
            Command::UseObjects => {
                self.with_objects = true;
                if let Phase::Imitation { with_objects, .. } = &mut self.phase {
                    *with_objects = true;
                }
            }
            Command::StartMirroring => {
                if let Phase::Imitation { movement, .. } = self.phase {
                    self.score_demonstration(movement, now);
                    self.start_mirroring(movement, now);
                }
            }
            Command::ReDemonstrate => {
                // Cues seen so far still count; the matcher starts over.
                self.window = None;
                self.entered_at = now;
                self.last_match = None;
            }
            Command::AssignRole { track, role } => {
                self.outbox.push(Output::RoleAssignment { track, role, t_ms: now });
            }
            Command::Abort => {
                if let Phase::Imitation { movement, mode: ImitationMode::Mirroring, .. } = self.phase {
                    self.outbox.push(Output::MirroringActive { movement, active: false, t_ms: now });
                }
                self.finish(EngineStatus::Aborted, now);
            }
        }
    }

    fn apply_algorithm(&mut self, seq: u64, a: AlgorithmEvent) {
        let now = self.clock;
        match a {
            AlgorithmEvent::GestureMatched { movement, result } | AlgorithmEvent::GestureFailed { movement, result } => {
                let current = matches!(
                    self.phase,
                    Phase::Imitation { movement: m, mode: ImitationMode::Demonstrate, .. } if m == movement
                );
                if current && self.window.is_some() {
                    self.last_match = Some((seq, result));
                }
            }
            AlgorithmEvent::ActivityChange { stats } => {
                if let Phase::Imitation { movement, mode: ImitationMode::Mirroring, .. } = self.phase {
                    self.outbox.push(Output::Suggestion { movement, stats, t_ms: now });
                }
            }
            AlgorithmEvent::VisibilityWarning { role, missing } => {
                let limbs: Vec<&str> = missing.iter().map(|l| l.as_str()).collect();
                let who = match role {
                    Role::Model => "model",
                    Role::Participant => "participant",
                    Role::Unassigned => "unassigned person",
                };
                self.warn(format!("low {who} visibility: {} not detected", limbs.join(", ")), now);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gesture::Chirality;
    use alloc::vec;
    use Observation::*;

    const DIR: &[&str] = &["F", "G", "H", "I"];

    fn session() -> Session {
        start_session(DIR, "F-0001", "F", RubricConfig::default(), 0).unwrap()
    }

    fn obs(s: &mut Session, t: u64, o: Observation) {
        s.step(SessionEvent::observation(t, o)).unwrap();
    }

    fn cmd(s: &mut Session, t: u64, c: Command) {
        s.step(SessionEvent::command(t, c)).unwrap();
    }

    fn result(status: MatchStatus) -> MatchResult {
        MatchResult {
            status,
            chirality: Chirality::Direct,
            keyframe_times: vec![None],
            best_similarity: vec![None],
            energy: 0.1,
            frames: 100,
        }
    }

    fn matched(s: &mut Session, t: u64, movement: u8, status: MatchStatus) {
        let result = result(status);
        let a = if status == MatchStatus::Success {
            AlgorithmEvent::GestureMatched { movement, result }
        } else {
            AlgorithmEvent::GestureFailed { movement, result }
        };
        s.step(SessionEvent::new(t, Payload::Algorithm(a))).unwrap();
    }

    fn codes(s: &Session) -> Vec<&'static str> {
        s.outcomes().iter().map(|o| o.code.as_str()).collect()
    }

    #[test]
    fn starts_in_greetings_without_outcomes() {
        let s = session();
        assert_eq!(s.phase(), Phase::Greetings);
        assert!(s.outcomes().is_empty());
        assert_eq!(s.deadline(), None);
        assert_eq!(
            start_session(DIR, "Z-0001", "Z", RubricConfig::default(), 0).unwrap_err(),
            EngineError::UnknownParticipant("Z".into())
        );
        let again = start_session(DIR, "F-0002", "F", RubricConfig::default(), 0).unwrap();
        assert_ne!(again.session_id(), s.session_id());
    }

    #[test]
    fn greetings_expiry_scores_one_and_moves_to_pairing() {
        let mut s = session();
        cmd(&mut s, 1_000, Command::AdvancePhase);
        assert_eq!(s.deadline(), Some(31_000));
        s.tick(30_999).unwrap();
        assert_eq!(s.phase(), Phase::Greetings);
        s.tick(31_000).unwrap();
        assert_eq!(s.phase(), Phase::Pairing);
        assert_eq!(codes(&s), ["1"]);
        assert_eq!(s.outcomes()[0].t_ms, 31_000);
    }

    #[test]
    fn late_hand_reach_still_scores_three() {
        let mut s = session();
        cmd(&mut s, 0, Command::AdvancePhase);
        obs(&mut s, 29_900, HandReach);
        s.tick(30_000).unwrap();
        assert_eq!(s.code(PhaseKind::Greetings), Some(Code::Three));
    }

    #[test]
    fn cue_after_expiry_belongs_to_the_next_phase() {
        let mut s = session();
        cmd(&mut s, 0, Command::AdvancePhase);
        obs(&mut s, 30_000, HandReach);
        assert_eq!(s.code(PhaseKind::Greetings), Some(Code::One));
        assert_eq!(s.log().last().unwrap().phase, Phase::Pairing);
    }

    #[test]
    fn cues_before_the_prompt_do_not_score() {
        let mut s = session();
        obs(&mut s, 500, HandReach);
        cmd(&mut s, 1_000, Command::AdvancePhase);
        s.tick(31_000).unwrap();
        assert_eq!(s.code(PhaseKind::Greetings), Some(Code::One));
    }

    #[test]
    fn operator_can_close_a_window_early() {
        let mut s = session();
        cmd(&mut s, 0, Command::AdvancePhase);
        obs(&mut s, 3_000, Smile);
        cmd(&mut s, 4_000, Command::AdvancePhase);
        assert_eq!(s.phase(), Phase::Pairing);
        assert_eq!(s.outcomes()[0].code, Code::Two);
        assert_eq!(s.outcomes()[0].evidence, vec![1]);
    }

    #[test]
    fn forgotten_prompt_arms_automatically() {
        let mut s = session();
        s.tick(180_000 + 30_000).unwrap();
        assert_eq!(codes(&s), ["1"]);
        assert_eq!(s.phase(), Phase::Pairing);
        assert_eq!(s.log().len(), 1);
        assert_eq!(s.log()[0].payload, Payload::Tick);
    }

    #[test]
    fn illegal_commands_are_rejected_and_not_logged() {
        let mut s = session();
        let err = s.step(SessionEvent::command(10, Command::StartMirroring)).unwrap_err();
        assert_eq!(err, EngineError::IllegalTransition { command: "start_mirroring", phase: PhaseKind::Greetings });
        assert!(s.step(SessionEvent::command(10, Command::UseObjects)).is_err());
        assert!(s.log().is_empty());
    }

    fn to_imitation(s: &mut Session) {
        cmd(s, 0, Command::AdvancePhase);
        obs(s, 1_000, HandReach);
        cmd(s, 2_000, Command::AdvancePhase);
        cmd(s, 3_000, Command::AdvancePhase);
        obs(s, 4_000, HandHold);
        cmd(s, 5_000, Command::AdvancePhase);
    }

    #[test]
    fn full_session_with_mirroring_fallback() {
        let mut s = session();
        to_imitation(&mut s);
        assert_eq!(s.phase(), Phase::Imitation { movement: 0, with_objects: false, mode: ImitationMode::Demonstrate });

        // Movement 1: recognized.
        cmd(&mut s, 10_000, Command::AdvancePhase);
        matched(&mut s, 15_000, 0, MatchStatus::Success);
        s.tick(30_000).unwrap();
        // Movement 2: no attempt at all, so the model mirrors.
        cmd(&mut s, 31_000, Command::AdvancePhase);
        matched(&mut s, 50_000, 1, MatchStatus::NoAttempt);
        s.tick(51_000).unwrap();
        assert_eq!(s.phase(), Phase::Imitation { movement: 1, with_objects: false, mode: ImitationMode::Mirroring });
        assert!(s.mirroring_triggered());
        obs(&mut s, 60_000, PositiveReaction);
        s.tick(81_000).unwrap();
        // Movement 3: a visible but unrecognized try.
        cmd(&mut s, 82_000, Command::AdvancePhase);
        obs(&mut s, 83_000, ImitationAttempt);
        cmd(&mut s, 90_000, Command::AdvancePhase);

        assert_eq!(codes(&s), ["3", "3", "3a", "1a", "3b", "2a", "3a"]);
        assert_eq!(s.phase(), Phase::Closing);
        assert_eq!(s.status(), EngineStatus::Completed);
        assert_eq!(s.step(SessionEvent::tick(100_000)), Err(EngineError::SessionEnded));
        let outputs = s.take_outputs();
        assert!(outputs.contains(&Output::MirroringActive { movement: 1, active: true, t_ms: 51_000 }));
        assert!(outputs.contains(&Output::MirroringActive { movement: 1, active: false, t_ms: 81_000 }));
        assert!(matches!(outputs.last(), Some(Output::SessionEnded { status: EngineStatus::Completed, .. })));
    }

    #[test]
    fn stale_match_results_are_ignored() {
        let mut s = session();
        to_imitation(&mut s);
        matched(&mut s, 6_000, 0, MatchStatus::Success); // before the window
        cmd(&mut s, 7_000, Command::AdvancePhase);
        matched(&mut s, 8_000, 2, MatchStatus::Success); // wrong movement
        s.tick(27_000).unwrap();
        assert_eq!(s.outcomes()[2].code, Code::OneA);
    }

    #[test]
    fn explicit_mirroring_scores_the_demonstration_first() {
        let mut s = session();
        to_imitation(&mut s);
        cmd(&mut s, 6_000, Command::AdvancePhase);
        obs(&mut s, 7_000, ImitationAttempt);
        cmd(&mut s, 8_000, Command::StartMirroring);
        assert_eq!(codes(&s), ["3", "3", "2a"]);
        assert!(matches!(s.phase(), Phase::Imitation { movement: 0, mode: ImitationMode::Mirroring, .. }));
        assert_eq!(s.deadline(), Some(38_000));
        assert!(s.step(SessionEvent::command(9_000, Command::StartMirroring)).is_err());
    }

    #[test]
    fn objects_flag_sticks_for_later_movements() {
        let mut s = session();
        to_imitation(&mut s);
        cmd(&mut s, 6_000, Command::UseObjects);
        assert!(matches!(s.phase(), Phase::Imitation { with_objects: true, .. }));
        cmd(&mut s, 6_500, Command::AdvancePhase);
        obs(&mut s, 7_000, ImitationAttempt);
        cmd(&mut s, 8_000, Command::AdvancePhase);
        assert!(matches!(s.phase(), Phase::Imitation { movement: 1, with_objects: true, .. }));
        assert!(s.outcomes()[2].with_objects);
    }

    #[test]
    fn redemonstrating_restarts_the_attempt() {
        let mut s = session();
        to_imitation(&mut s);
        cmd(&mut s, 6_000, Command::AdvancePhase);
        matched(&mut s, 10_000, 0, MatchStatus::AttemptFailed);
        cmd(&mut s, 12_000, Command::ReDemonstrate);
        assert_eq!(s.deadline(), None);
        cmd(&mut s, 15_000, Command::AdvancePhase);
        assert_eq!(s.deadline(), Some(35_000));
        s.tick(35_000).unwrap();
        assert_eq!(s.outcomes()[2].code, Code::OneA);
    }

    #[test]
    fn abort_ends_the_session_anywhere() {
        let mut s = session();
        cmd(&mut s, 0, Command::AdvancePhase);
        obs(&mut s, 100, HandReach);
        cmd(&mut s, 200, Command::AdvancePhase);
        cmd(&mut s, 300, Command::Abort);
        assert_eq!(s.status(), EngineStatus::Aborted);
        assert_eq!(s.phase(), Phase::Pairing);
        assert_eq!(codes(&s), ["3"]);
        assert_eq!(s.step(SessionEvent::command(400, Command::AdvancePhase)), Err(EngineError::SessionEnded));
    }

    #[test]
    fn suggestions_only_while_mirroring() {
        let stats = MotionStats { window_ms: 1000, energy: 0.2, rhythm_period_ms: Some(800.0) };
        let change = |t| SessionEvent::new(t, Payload::Algorithm(AlgorithmEvent::ActivityChange { stats }));
        let mut s = session();
        s.step(change(10)).unwrap();
        assert!(!s.take_outputs().iter().any(|o| matches!(o, Output::Suggestion { .. })));
        to_imitation(&mut s);
        cmd(&mut s, 6_000, Command::StartMirroring);
        s.step(change(7_000)).unwrap();
        assert!(s.take_outputs().iter().any(|o| matches!(o, Output::Suggestion { movement: 0, .. })));
        s.tick(36_000).unwrap();
        assert_eq!(s.outcomes().last().unwrap().code, Code::OneB);
    }

    #[test]
    fn timestamps_never_run_backwards() {
        let mut s = session();
        cmd(&mut s, 5_000, Command::AdvancePhase);
        obs(&mut s, 1_000, Smile);
        assert_eq!(s.log()[1].t_ms, 5_000);
        assert_eq!(s.observations, vec![(1, Smile)]);
    }

    #[test]
    fn visibility_warning_is_recorded() {
        let mut s = session();
        let missing = crate::pose::LimbSet::from_limbs(&[crate::pose::Limb::Torso]);
        let ev = AlgorithmEvent::VisibilityWarning { role: Role::Model, missing };
        s.step(SessionEvent::new(0, Payload::Algorithm(ev))).unwrap();
        assert_eq!(s.warnings(), ["low model visibility: torso not detected"]);
    }

    #[test]
    fn replaying_the_log_reproduces_outcomes() {
        let mut s = session();
        to_imitation(&mut s);
        cmd(&mut s, 6_000, Command::AdvancePhase);
        s.tick(1_000_000).unwrap();
        assert_eq!(s.status(), EngineStatus::Completed);
        let r = replay("F-0001", "F", *s.config(), 0, s.log()).unwrap();
        assert_eq!(r.outcomes(), s.outcomes());
        assert_eq!(r.log(), s.log());
    }
}
