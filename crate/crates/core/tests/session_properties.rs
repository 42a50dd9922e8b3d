use mimic_core::gesture::{Chirality, MatchResult, MatchStatus, MotionStats};
use mimic_core::scene::{Role, TrackId};
use mimic_core::session::{
    replay, start_session, AlgorithmEvent, Code, CodeFamily, Command, EngineStatus, ImitationMode, Observation,
    Output, Payload, Phase, PhaseKind, RubricConfig, Session, SessionEvent,
};
use proptest::prelude::*;

const DIR: &[&str] = &["F"];

fn observation() -> impl Strategy<Value = Observation> {
    prop_oneof![
        Just(Observation::HandReach),
        Just(Observation::HandHold),
        Just(Observation::Smile),
        Just(Observation::HeadTowards),
        Just(Observation::JointAttention),
        Just(Observation::ImitationAttempt),
        Just(Observation::PositiveReaction),
        Just(Observation::IncreasedAttention),
    ]
}

fn command() -> impl Strategy<Value = Command> {
    prop_oneof![
        6 => Just(Command::AdvancePhase),
        1 => Just(Command::UseObjects),
        1 => Just(Command::StartMirroring),
        1 => Just(Command::ReDemonstrate),
        1 => (0u32..3).prop_map(|t| Command::AssignRole { track: TrackId(t), role: Role::Model }),
        1 => Just(Command::Abort),
    ]
}

fn status() -> impl Strategy<Value = MatchStatus> {
    prop_oneof![
        Just(MatchStatus::Success),
        Just(MatchStatus::AttemptFailed),
        Just(MatchStatus::NoAttempt),
        Just(MatchStatus::Unscoreable),
    ]
}

fn payload() -> impl Strategy<Value = Payload> {
    prop_oneof![
        4 => observation().prop_map(Payload::Observation),
        4 => command().prop_map(Payload::Command),
        2 => Just(Payload::Tick),
        2 => (0u8..3, status()).prop_map(|(movement, status)| {
            let result = MatchResult {
                status,
                chirality: Chirality::Direct,
                keyframe_times: vec![None],
                best_similarity: vec![None],
                energy: 0.05,
                frames: 10,
            };
            Payload::Algorithm(if status == MatchStatus::Success {
                AlgorithmEvent::GestureMatched { movement, result }
            } else {
                AlgorithmEvent::GestureFailed { movement, result }
            })
        }),
        1 => Just(Payload::Algorithm(AlgorithmEvent::ActivityChange {
            stats: MotionStats { window_ms: 3000, energy: 0.1, rhythm_period_ms: None },
        })),
    ]
}

/// Events with non-negative gaps (some zero, some past several windows).
fn events() -> impl Strategy<Value = Vec<SessionEvent>> {
    proptest::collection::vec((prop_oneof![0u64..2_000, 0u64..60_000, Just(0u64)], payload()), 0..80).prop_map(
        |v| {
            let mut t = 0;
            v.into_iter()
                .map(|(gap, p)| {
                    t += gap;
                    SessionEvent::new(t, p)
                })
                .collect()
        },
    )
}

/// Runs the events, collecting per-step outputs; illegal commands are
/// skipped.
fn run(events: &[SessionEvent]) -> (Session, Vec<(SessionEvent, Vec<Output>)>) {
    let mut s = start_session(DIR, "F-0001", "F", RubricConfig::default(), 0).unwrap();
    s.take_outputs();
    let mut steps = Vec::new();
    for e in events {
        if s.status() != EngineStatus::Running {
            break;
        }
        let _ = s.step(e.clone());
        steps.push((e.clone(), s.take_outputs()));
    }
    (s, steps)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn codes_stay_in_their_phase(evs in events()) {
        let (s, _) = run(&evs);
        for (i, o) in s.outcomes().iter().enumerate() {
            match (o.phase, o.movement) {
                (PhaseKind::Greetings | PhaseKind::Pairing, None) => prop_assert_eq!(o.code.family(), CodeFamily::Plain),
                (PhaseKind::Imitation, Some(m)) => {
                    prop_assert!(m < 3);
                    match o.code.family() {
                        CodeFamily::A => {}
                        CodeFamily::B => prop_assert!(
                            s.outcomes()[..i].iter().any(|p| p.movement == Some(m) && p.code.family() == CodeFamily::A)
                        ),
                        CodeFamily::Plain => prop_assert!(false, "plain code in imitation"),
                    }
                }
                (PhaseKind::Imitation, None) => prop_assert_ne!(o.code.family(), CodeFamily::Plain),
                other => prop_assert!(false, "unexpected outcome slot {:?}", other),
            }
        }
    }

    #[test]
    fn mirroring_only_after_1a_or_command(evs in events()) {
        let (_, steps) = run(&evs);
        for (event, outputs) in &steps {
            for (i, out) in outputs.iter().enumerate() {
                if let Output::PhaseEntered { phase: Phase::Imitation { movement, mode: ImitationMode::Mirroring, .. }, .. } = out {
                    let after_1a = outputs[..i].iter().any(|o| matches!(o,
                        Output::Outcome(p) if p.movement == Some(*movement) && p.code == Code::OneA));
                    let commanded = event.payload == Payload::Command(Command::StartMirroring);
                    prop_assert!(after_1a || commanded);
                }
            }
        }
    }

    #[test]
    fn identical_logs_give_identical_outcomes(evs in events()) {
        let (a, _) = run(&evs);
        let (b, _) = run(&evs);
        prop_assert_eq!(serde_json::to_vec(a.outcomes()).unwrap(), serde_json::to_vec(b.outcomes()).unwrap());
        let r = replay("F-0001", "F", RubricConfig::default(), 0, a.log()).unwrap();
        prop_assert_eq!(r.outcomes(), a.outcomes());
        prop_assert_eq!(r.status(), a.status());
    }

    #[test]
    fn every_session_terminates(evs in events()) {
        let (mut s, _) = run(&evs);
        let _ = s.tick(s.clock() + 10_000_000);
        prop_assert_ne!(s.status(), EngineStatus::Running);
        if s.status() == EngineStatus::Completed {
            prop_assert_eq!(s.phase(), Phase::Closing);
            prop_assert!(s.code(PhaseKind::Imitation).is_some());
        }
    }

    #[test]
    fn cue_timing_inside_the_window_is_irrelevant(
        cues in proptest::collection::vec((observation(), 1u64..30_000, 1u64..30_000), 0..6),
        pairing in any::<bool>(),
    ) {
        let score = |pick: fn(&(Observation, u64, u64)) -> u64| {
            let mut s = start_session(DIR, "F-0001", "F", RubricConfig::default(), 0).unwrap();
            if pairing {
                s.step(SessionEvent::command(0, Command::AdvancePhase)).unwrap();
                s.step(SessionEvent::command(0, Command::AdvancePhase)).unwrap();
            }
            s.step(SessionEvent::command(0, Command::AdvancePhase)).unwrap();
            let mut timed: Vec<_> = cues.iter().map(|c| (pick(c), c.0)).collect();
            timed.sort_by_key(|c| c.0);
            for (t, o) in timed {
                s.step(SessionEvent::observation(t, o)).unwrap();
            }
            s.tick(30_000).unwrap();
            s.code(if pairing { PhaseKind::Pairing } else { PhaseKind::Greetings }).unwrap()
        };
        prop_assert_eq!(score(|c| c.1), score(|c| c.2));
    }
}
