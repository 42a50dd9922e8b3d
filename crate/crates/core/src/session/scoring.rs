use alloc::vec::Vec;

use super::{Code, CodeFamily, InterestCues, Observation, PhaseKind, PhaseOutcome};
use crate::gesture::{MatchResult, MatchStatus};

/// A code and the sequence numbers of the entries that decided it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Scored {
    pub code: Code,
    pub evidence: Vec<u64>,
}

fn seqs_of(obs: &[(u64, Observation)], pred: impl Fn(Observation) -> bool) -> Vec<u64> {
    obs.iter().filter(|(_, o)| pred(*o)).map(|(s, _)| *s).collect()
}

/// Success cue → 3; else an accepted interest cue → 2; else 1. When in the
/// window the cues came does not matter.
fn score_three_level(obs: &[(u64, Observation)], success: Observation, cues: &InterestCues) -> Scored {
    let hits = seqs_of(obs, |o| o == success);
    if !hits.is_empty() {
        return Scored { code: Code::Three, evidence: hits };
    }
    let interest = seqs_of(obs, |o| cues.accepts(o));
    if !interest.is_empty() {
        return Scored { code: Code::Two, evidence: interest };
    }
    Scored { code: Code::One, evidence: Vec::new() }
}

/// Greetings: reaching out to the model is success.
pub fn score_greetings(obs: &[(u64, Observation)], cues: &InterestCues) -> Scored {
    score_three_level(obs, Observation::HandReach, cues)
}

/// Pairing: holding the model's hand is success.
pub fn score_pairing(obs: &[(u64, Observation)], cues: &InterestCues) -> Scored {
    score_three_level(obs, Observation::HandHold, cues)
}

/// One demonstrated movement. An attempt is either observed by the operator
/// or visible to the matcher; only a recognized gesture scores 3a.
pub fn score_imitation_movement(obs: &[(u64, Observation)], matched: Option<(u64, &MatchResult)>) -> Scored {
    let observed = seqs_of(obs, |o| o == Observation::ImitationAttempt);
    let status = matched.map(|(_, r)| r.status);
    let match_seq = matched.map(|(s, _)| s);
    let algorithm_attempt = matches!(status, Some(MatchStatus::Success | MatchStatus::AttemptFailed));
    if !(algorithm_attempt || !observed.is_empty()) {
        return Scored { code: Code::OneA, evidence: Vec::new() };
    }
    let mut evidence = observed;
    if algorithm_attempt {
        evidence.extend(match_seq);
    }
    evidence.sort_unstable();
    let code = if status == Some(MatchStatus::Success) { Code::ThreeA } else { Code::TwoA };
    Scored { code, evidence }
}

/// Reaction to being mirrored. Activity changes are only suggestions and do
/// not count here.
pub fn score_mirroring(obs: &[(u64, Observation)]) -> Scored {
    let positive = seqs_of(obs, |o| o == Observation::PositiveReaction);
    if !positive.is_empty() {
        return Scored { code: Code::ThreeB, evidence: positive };
    }
    let attention = seqs_of(obs, |o| o == Observation::IncreasedAttention);
    if !attention.is_empty() {
        return Scored { code: Code::TwoB, evidence: attention };
    }
    Scored { code: Code::OneB, evidence: Vec::new() }
}

/// Phase-level imitation code: the best level reached over all movements,
/// preferring the `a` family on equal levels.
pub fn aggregate_imitation(movements: &[PhaseOutcome], t_ms: u64) -> Option<PhaseOutcome> {
    let best = movements
        .iter()
        .filter(|o| o.phase == PhaseKind::Imitation && o.movement.is_some())
        .max_by_key(|o| (o.code.level(), o.code.family() == CodeFamily::A, core::cmp::Reverse(o.movement)))?;
    let with_objects = movements.iter().any(|o| o.with_objects);
    Some(PhaseOutcome {
        phase: PhaseKind::Imitation,
        movement: None,
        code: best.code,
        evidence: best.evidence.clone(),
        with_objects,
        t_ms,
    })
}
