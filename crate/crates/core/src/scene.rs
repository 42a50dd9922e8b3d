//! Turns raw frames into a two-person scene.
//!
//! Spurious detections (small skeletons on background patterns, fragments
//! with few joints) are dropped, the remaining skeletons are tracked across
//! frames by nearest neck position, and tracks are labelled participant or
//! model.

use alloc::collections::VecDeque;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pose::{normalize, Frame, JointId, Limb, Skeleton};

pub const DEFAULT_MIN_HEIGHT_RATIO: f64 = 0.30;
pub const DEFAULT_MIN_COVERAGE: f64 = 0.25;
pub const DEFAULT_MAX_JUMP: f64 = 1.5;
pub const DEFAULT_TRACK_TTL_MS: u64 = 1000;
pub const NECK_TRACE_LEN: usize = 30;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SceneError {
    #[error("side-based role assignment needs exactly 2 tracks, found {found}")]
    AmbiguousRoles { found: usize },
    #[error("no track with id {0}")]
    UnknownTrack(TrackId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TrackId(pub u32);

impl core::fmt::Display for TrackId {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Participant,
    Model,
    Unassigned,
}

/// Image side, as seen on screen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Left,
    Right,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "policy")]
pub enum RolePolicy {
    /// The model stands on the given image side of the participant.
    BySide { model_on: Side },
    /// Explicit assignment from the operator.
    ByOperator { track: TrackId, role: Role },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackedPerson {
    pub track_id: TrackId,
    pub role: Role,
    pub last_skeleton: Skeleton,
    pub last_seen: u64,
    /// Most recent neck (anchor) positions, oldest first.
    pub neck_trace: VecDeque<(f64, f64)>,
}

impl TrackedPerson {
    pub fn mean_neck_x(&self) -> f64 {
        if self.neck_trace.is_empty() {
            return 0.0;
        }
        self.neck_trace.iter().map(|p| p.0).sum::<f64>() / self.neck_trace.len() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackerConfig {
    /// Largest anchor displacement, in torso lengths, that still continues a track.
    pub max_jump: f64,
    pub track_ttl_ms: u64,
    pub conf_min: f64,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        TrackerConfig {
            max_jump: DEFAULT_MAX_JUMP,
            track_ttl_ms: DEFAULT_TRACK_TTL_MS,
            conf_min: crate::DEFAULT_CONF_MIN,
        }
    }
}

/// Tracker state threaded through the processing loop.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrackerState {
    pub tracks: Vec<TrackedPerson>,
    pub next_id: u32,
}

impl TrackerState {
    pub fn with_role(&self, role: Role) -> Option<&TrackedPerson> {
        self.tracks.iter().find(|t| t.role == role)
    }
}

/// Fraction of the 18 joints that are visible.
pub fn coverage(skeleton: &Skeleton, conf_min: f64) -> f64 {
    skeleton.visible_count(conf_min) as f64 / JointId::COUNT as f64
}

/// Drops skeletons below the coverage floor, then drops skeletons shorter
/// than `min_height_ratio` × the tallest remaining one. With a single
/// remaining skeleton only the coverage rule applies.
pub fn reject_false_positives(frame: &Frame, min_height_ratio: f64, min_coverage: f64, conf_min: f64) -> Frame {
    let covered: Vec<Skeleton> = frame
        .skeletons
        .iter()
        .filter(|s| coverage(s, conf_min) >= min_coverage)
        .copied()
        .collect();
    let skeletons = if covered.len() > 1 {
        let tallest = covered.iter().map(|s| s.height(conf_min)).fold(0.0, f64::max);
        covered
            .into_iter()
            .filter(|s| s.height(conf_min) >= min_height_ratio * tallest)
            .collect()
    } else {
        covered
    };
    Frame { skeletons, ..frame.clone() }
}

/// Torso length in pixels, or a bounding-box estimate when the skeleton
/// cannot be normalized.
fn body_scale(skeleton: &Skeleton, conf_min: f64) -> Option<f64> {
    if let Ok(n) = normalize(skeleton, conf_min) {
        return Some(n.scale);
    }
    let (x0, y0, x1, y1) = skeleton.bbox(conf_min)?;
    let extent = (x1 - x0).max(y1 - y0) / 3.0;
    (extent > 0.0 && extent.is_finite()).then_some(extent)
}

/// Advances the tracker by one filtered frame.
///
/// Candidate (track, skeleton) pairs within `max_jump` torso lengths are
/// accepted greedily in order of increasing distance. Unmatched skeletons
/// open new tracks; tracks unseen for longer than the TTL are dropped.
pub fn track(state: TrackerState, frame: &Frame, config: &TrackerConfig) -> TrackerState {
    let conf_min = config.conf_min;
    let now = frame.timestamp_ms;
    let TrackerState { tracks, mut next_id } = state;
    let mut tracks: Vec<TrackedPerson> = tracks
        .into_iter()
        .filter(|t| now.saturating_sub(t.last_seen) <= config.track_ttl_ms)
        .collect();

    let anchors: Vec<Option<(f64, f64)>> = frame.skeletons.iter().map(|s| s.anchor(conf_min)).collect();
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for (ti, t) in tracks.iter().enumerate() {
        let Some(&prev) = t.neck_trace.back() else { continue };
        let prev_scale = body_scale(&t.last_skeleton, conf_min);
        for (di, skel) in frame.skeletons.iter().enumerate() {
            let Some(cur) = anchors[di] else { continue };
            let dist_px = libm::hypot(cur.0 - prev.0, cur.1 - prev.1);
            let scale = match (prev_scale, body_scale(skel, conf_min)) {
                (Some(a), Some(b)) => 0.5 * (a + b),
                (Some(a), None) | (None, Some(a)) => a,
                (None, None) => continue,
            };
            let dist = dist_px / scale;
            if dist.is_finite() && dist <= config.max_jump {
                pairs.push((dist, ti, di));
            }
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

    let mut track_taken = alloc::vec![false; tracks.len()];
    let mut det_taken = alloc::vec![false; frame.skeletons.len()];
    for (_, ti, di) in pairs {
        if track_taken[ti] || det_taken[di] {
            continue;
        }
        track_taken[ti] = true;
        det_taken[di] = true;
        update(&mut tracks[ti], &frame.skeletons[di], anchors[di], now);
    }

    for (di, skel) in frame.skeletons.iter().enumerate() {
        if det_taken[di] {
            continue;
        }
        let Some(anchor) = anchors[di] else { continue };
        let mut person = TrackedPerson {
            track_id: TrackId(next_id),
            role: Role::Unassigned,
            last_skeleton: *skel,
            last_seen: now,
            neck_trace: VecDeque::with_capacity(NECK_TRACE_LEN),
        };
        next_id += 1;
        person.neck_trace.push_back(anchor);
        tracks.push(person);
    }

    TrackerState { tracks, next_id }
}

fn update(track: &mut TrackedPerson, skeleton: &Skeleton, anchor: Option<(f64, f64)>, now: u64) {
    track.last_skeleton = *skeleton;
    track.last_seen = now;
    if let Some(a) = anchor {
        if track.neck_trace.len() == NECK_TRACE_LEN {
            track.neck_trace.pop_front();
        }
        track.neck_trace.push_back(a);
    }
}

/// Labels tracks as participant and model. Existing roles are kept; only
/// unassigned tracks receive a role.
pub fn assign_roles(mut tracks: Vec<TrackedPerson>, policy: RolePolicy) -> Result<Vec<TrackedPerson>, SceneError> {
    match policy {
        RolePolicy::ByOperator { track, role } => {
            let idx = tracks
                .iter()
                .position(|t| t.track_id == track)
                .ok_or(SceneError::UnknownTrack(track))?;
            if role != Role::Unassigned {
                for t in tracks.iter_mut() {
                    if t.role == role {
                        t.role = Role::Unassigned;
                    }
                }
            }
            tracks[idx].role = role;
        }
        RolePolicy::BySide { model_on } => {
            if tracks.len() != 2 {
                return Err(SceneError::AmbiguousRoles { found: tracks.len() });
            }
            let (a, b) = (tracks[0].role, tracks[1].role);
            let complement = |r: Role| match r {
                Role::Participant => Role::Model,
                _ => Role::Participant,
            };
            match (a, b) {
                (Role::Unassigned, Role::Unassigned) => {
                    let first_is_left = tracks[0].mean_neck_x() <= tracks[1].mean_neck_x();
                    let first_is_model = first_is_left == (model_on == Side::Left);
                    tracks[0].role = if first_is_model { Role::Model } else { Role::Participant };
                    tracks[1].role = complement(tracks[0].role);
                }
                (Role::Unassigned, known) => tracks[0].role = complement(known),
                (known, Role::Unassigned) => tracks[1].role = complement(known),
                _ => {}
            }
        }
    }
    Ok(tracks)
}

/// Per-limb visibility of one skeleton.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VisibilityReport {
    pub head: bool,
    pub torso: bool,
    pub l_arm: bool,
    pub r_arm: bool,
    pub l_leg: bool,
    pub r_leg: bool,
    /// Fraction of the 18 joints visible.
    pub coverage: f64,
}

impl VisibilityReport {
    pub fn limb(&self, limb: Limb) -> bool {
        match limb {
            Limb::Head => self.head,
            Limb::Torso => self.torso,
            Limb::LArm => self.l_arm,
            Limb::RArm => self.r_arm,
            Limb::LLeg => self.l_leg,
            Limb::RLeg => self.r_leg,
        }
    }
}

pub fn visibility(skeleton: &Skeleton, conf_min: f64) -> VisibilityReport {
    let limb = |l: Limb| l.joints().iter().all(|j| skeleton.is_visible(*j, conf_min));
    VisibilityReport {
        head: limb(Limb::Head),
        torso: limb(Limb::Torso),
        l_arm: limb(Limb::LArm),
        r_arm: limb(Limb::RArm),
        l_leg: limb(Limb::LLeg),
        r_leg: limb(Limb::RLeg),
        coverage: coverage(skeleton, conf_min),
    }
}
