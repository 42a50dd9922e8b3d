//! The interaction protocol: phases, timed windows, rubric scoring and
//! per-session outcome codes.

mod engine;
mod scoring;

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gesture::{MatchResult, MotionStats};
use crate::pose::LimbSet;
use crate::scene::{Role, TrackId};

pub use engine::{replay, start_session, EngineStatus, Output, ParticipantDirectory, Session, SessionSnapshot};
pub use scoring::{
    aggregate_imitation, score_greetings, score_imitation_movement, score_mirroring, score_pairing, Scored,
};

/// Movements demonstrated in the imitation phase.
pub const MOVEMENT_COUNT: u8 = 3;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EngineError {
    #[error("participant {0:?} is not registered")]
    UnknownParticipant(String),
    #[error("{command} is not allowed during {phase}")]
    IllegalTransition { command: &'static str, phase: PhaseKind },
    #[error("session has ended")]
    SessionEnded,
    #[error("invalid rubric: {0}")]
    InvalidConfig(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseKind {
    Greetings,
    Pairing,
    Imitation,
    Closing,
}

impl PhaseKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PhaseKind::Greetings => "greetings",
            PhaseKind::Pairing => "pairing",
            PhaseKind::Imitation => "imitation",
            PhaseKind::Closing => "closing",
        }
    }
}

impl fmt::Display for PhaseKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImitationMode {
    /// The model shows the movement and waits for the participant.
    Demonstrate,
    /// The model copies the participant.
    Mirroring,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Phase {
    Greetings,
    Pairing,
    Imitation { movement: u8, with_objects: bool, mode: ImitationMode },
    Closing,
}

impl Phase {
    pub fn kind(&self) -> PhaseKind {
        match self {
            Phase::Greetings => PhaseKind::Greetings,
            Phase::Pairing => PhaseKind::Pairing,
            Phase::Imitation { .. } => PhaseKind::Imitation,
            Phase::Closing => PhaseKind::Closing,
        }
    }
}

/// Rubric code. Imitation codes carry the family letter: `a` for
/// imitating the model, `b` for reacting to being imitated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Code {
    Three,
    Two,
    One,
    ThreeA,
    TwoA,
    OneA,
    ThreeB,
    TwoB,
    OneB,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CodeFamily {
    Plain,
    A,
    B,
}

impl Code {
    pub const ALL: [Code; 9] = [
        Code::Three,
        Code::Two,
        Code::One,
        Code::ThreeA,
        Code::TwoA,
        Code::OneA,
        Code::ThreeB,
        Code::TwoB,
        Code::OneB,
    ];

    /// 3 for success, 2 intermediate, 1 failure.
    pub fn level(self) -> u8 {
        match self {
            Code::Three | Code::ThreeA | Code::ThreeB => 3,
            Code::Two | Code::TwoA | Code::TwoB => 2,
            Code::One | Code::OneA | Code::OneB => 1,
        }
    }

    pub fn family(self) -> CodeFamily {
        match self {
            Code::Three | Code::Two | Code::One => CodeFamily::Plain,
            Code::ThreeA | Code::TwoA | Code::OneA => CodeFamily::A,
            Code::ThreeB | Code::TwoB | Code::OneB => CodeFamily::B,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Code::Three => "3",
            Code::Two => "2",
            Code::One => "1",
            Code::ThreeA => "3a",
            Code::TwoA => "2a",
            Code::OneA => "1a",
            Code::ThreeB => "3b",
            Code::TwoB => "2b",
            Code::OneB => "1b",
        }
    }

    /// Whether this code may be emitted for the phase (and imitation mode).
    pub fn legal_for(self, phase: &Phase) -> bool {
        match phase {
            Phase::Greetings | Phase::Pairing => self.family() == CodeFamily::Plain,
            Phase::Imitation { mode: ImitationMode::Demonstrate, .. } => self.family() == CodeFamily::A,
            Phase::Imitation { mode: ImitationMode::Mirroring, .. } => self.family() == CodeFamily::B,
            Phase::Closing => false,
        }
    }
}

impl fmt::Display for Code {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown outcome code {0:?}")]
pub struct ParseCodeError(pub String);

impl FromStr for Code {
    type Err = ParseCodeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Code::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| ParseCodeError(s.into()))
    }
}

impl Serialize for Code {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for Code {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = <alloc::borrow::Cow<'de, str>>::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// What the operator saw the participant do.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Observation {
    HandReach,
    HandHold,
    Smile,
    HeadTowards,
    JointAttention,
    ImitationAttempt,
    PositiveReaction,
    IncreasedAttention,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlgorithmEvent {
    GestureMatched { movement: u8, result: MatchResult },
    GestureFailed { movement: u8, result: MatchResult },
    ActivityChange { stats: MotionStats },
    /// Limbs of a tracked person have been hard to see for a while.
    VisibilityWarning { role: Role, missing: LimbSet },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    /// First press: the prompt was delivered, start the wait window.
    /// Second press: close the window now.
    AdvancePhase,
    UseObjects,
    StartMirroring,
    ReDemonstrate,
    AssignRole { track: TrackId, role: Role },
    Abort,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::AdvancePhase => "advance_phase",
            Command::UseObjects => "use_objects",
            Command::StartMirroring => "start_mirroring",
            Command::ReDemonstrate => "re_demonstrate",
            Command::AssignRole { .. } => "assign_role",
            Command::Abort => "abort",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Payload {
    Observation(Observation),
    Algorithm(AlgorithmEvent),
    Command(Command),
    /// Clock progress. Logged only when it fired a timer.
    Tick,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionEvent {
    pub t_ms: u64,
    pub payload: Payload,
}

impl SessionEvent {
    pub fn new(t_ms: u64, payload: Payload) -> Self {
        SessionEvent { t_ms, payload }
    }

    pub fn observation(t_ms: u64, o: Observation) -> Self {
        SessionEvent::new(t_ms, Payload::Observation(o))
    }

    pub fn command(t_ms: u64, c: Command) -> Self {
        SessionEvent::new(t_ms, Payload::Command(c))
    }

    pub fn tick(t_ms: u64) -> Self {
        SessionEvent::new(t_ms, Payload::Tick)
    }
}

/// An event as accepted by the engine: numbered, clock-stamped, and tagged
/// with the phase it arrived in. One line of the session log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub seq: u64,
    pub t_ms: u64,
    pub phase: Phase,
    pub payload: Payload,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseOutcome {
    pub phase: PhaseKind,
    /// Movement index for per-movement imitation outcomes; `None` for the
    /// phase-level result.
    pub movement: Option<u8>,
    pub code: Code,
    /// Sequence numbers of the log entries that decided the code.
    pub evidence: Vec<u64>,
    pub with_objects: bool,
    pub t_ms: u64,
}

/// Which interest cues count towards the intermediate code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct InterestCues {
    pub head_towards: bool,
    pub smile: bool,
    pub joint_attention: bool,
}

impl Default for InterestCues {
    fn default() -> Self {
        InterestCues { head_towards: true, smile: true, joint_attention: false }
    }
}

impl InterestCues {
    pub fn accepts(&self, o: Observation) -> bool {
        match o {
            Observation::HeadTowards => self.head_towards,
            Observation::Smile => self.smile,
            Observation::JointAttention => self.joint_attention,
            _ => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct RubricConfig {
    /// Wait after the greeting or pairing prompt.
    pub wait_window_ms: u64,
    /// Time allowed for imitating one demonstrated movement.
    pub movement_window_ms: u64,
    /// Time spent mirroring the participant before scoring.
    pub mirroring_window_ms: u64,
    /// A window is armed automatically if the operator has not signalled
    /// the prompt this long after the phase began.
    pub prompt_timeout_ms: u64,
    pub greetings_cues: InterestCues,
    pub pairing_cues: InterestCues,
}

impl Default for RubricConfig {
    fn default() -> Self {
        RubricConfig {
            wait_window_ms: 30_000,
            movement_window_ms: 20_000,
            mirroring_window_ms: 30_000,
            prompt_timeout_ms: 180_000,
            greetings_cues: InterestCues::default(),
            pairing_cues: InterestCues::default(),
        }
    }
}

impl RubricConfig {
    pub fn validate(&self) -> Result<(), EngineError> {
        if self.wait_window_ms == 0 {
            return Err(EngineError::InvalidConfig("wait_window_ms must be positive"));
        }
        if self.movement_window_ms == 0 || self.mirroring_window_ms == 0 {
            return Err(EngineError::InvalidConfig("imitation windows must be positive"));
        }
        if self.prompt_timeout_ms == 0 {
            return Err(EngineError::InvalidConfig("prompt_timeout_ms must be positive"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn codes_roundtrip_as_strings() {
        for c in Code::ALL {
            let json = serde_json::to_string(&c).unwrap();
            assert_eq!(json, alloc::format!("\"{}\"", c.as_str()));
            assert_eq!(serde_json::from_str::<Code>(&json).unwrap(), c);
        }
        assert!("4a".parse::<Code>().is_err());
    }

    #[test]
    fn code_legality_by_phase() {
        let demo = Phase::Imitation { movement: 0, with_objects: false, mode: ImitationMode::Demonstrate };
        let mirror = Phase::Imitation { movement: 0, with_objects: false, mode: ImitationMode::Mirroring };
        assert!(Code::Three.legal_for(&Phase::Greetings));
        assert!(!Code::ThreeA.legal_for(&Phase::Pairing));
        assert!(Code::OneA.legal_for(&demo) && !Code::OneB.legal_for(&demo));
        assert!(Code::TwoB.legal_for(&mirror));
        assert!(Code::ALL.iter().all(|c| !c.legal_for(&Phase::Closing)));
    }

    #[test]
    fn payload_json_shapes() {
        let e = SessionEvent::command(5, Command::AssignRole { track: TrackId(2), role: Role::Model });
        let json = serde_json::to_string(&e).unwrap();
        assert_eq!(json, r#"{"t_ms":5,"payload":{"command":{"assign_role":{"track":2,"role":"model"}}}}"#);
        let obs = serde_json::to_string(&Payload::Observation(Observation::HandReach)).unwrap();
        assert_eq!(obs, r#"{"observation":"hand_reach"}"#);
        assert_eq!(serde_json::to_string(&Payload::Tick).unwrap(), r#""tick""#);
        let phase = Phase::Imitation { movement: 1, with_objects: true, mode: ImitationMode::Mirroring };
        assert_eq!(
            serde_json::to_string(&phase).unwrap(),
            r#"{"kind":"imitation","movement":1,"with_objects":true,"mode":"mirroring"}"#
        );
    }

    #[test]
    fn zero_window_is_invalid() {
        let c = RubricConfig { wait_window_ms: 0, ..Default::default() };
        assert!(c.validate().is_err());
        RubricConfig::default().validate().unwrap();
    }
}
