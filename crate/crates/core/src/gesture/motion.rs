use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::matcher::FeatureFrame;
use crate::pose::{JointId, NormalizedSkeleton};

/// Frame interval that energy is normalized to (15 fps).
pub const REFERENCE_FRAME_MS: f64 = 1000.0 / 15.0;

/// Below this standard deviation (torso lengths) a signal has no rhythm.
const MIN_RHYTHM_STD: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MotionError {
    #[error("window holds {frames} frames, need at least 2")]
    WindowTooSmall { frames: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotionStats {
    pub window_ms: u64,
    /// Mean per-frame joint displacement, in torso lengths per 15 fps frame.
    pub energy: f64,
    /// Median time between movement peaks, if the motion is periodic.
    pub rhythm_period_ms: Option<f64>,
}

/// Mean L1 displacement over joints visible in both poses.
pub fn pair_displacement(a: &NormalizedSkeleton, b: &NormalizedSkeleton) -> Option<f64> {
    let mut sum = 0.0;
    let mut n = 0usize;
    for (p, q) in a.joints.iter().zip(&b.joints) {
        if p.visible && q.visible {
            sum += libm::fabs(p.x - q.x) + libm::fabs(p.y - q.y);
            n += 1;
        }
    }
    (n > 0).then(|| sum / n as f64)
}

/// Energy and rhythm of a window of participant frames.
///
/// The rhythm is read from the joint coordinate that varies most across the
/// window: one excursion above the mean per movement cycle.
pub fn motion_stats(frames: &[FeatureFrame]) -> Result<MotionStats, MotionError> {
    if frames.len() < 2 {
        return Err(MotionError::WindowTooSmall { frames: frames.len() });
    }
    let window_ms = frames[frames.len() - 1].t_ms.saturating_sub(frames[0].t_ms);

    let mut sum = 0.0;
    let mut pairs = 0usize;
    for w in frames.windows(2) {
        if let (Some(a), Some(b)) = (&w[0].pose, &w[1].pose) {
            let dt = w[1].t_ms.saturating_sub(w[0].t_ms);
            if let (Some(d), true) = (pair_displacement(a, b), dt > 0) {
                sum += d * REFERENCE_FRAME_MS / dt as f64;
                pairs += 1;
            }
        }
    }
    let energy = if pairs == 0 { 0.0 } else { sum / pairs as f64 };

    Ok(MotionStats { window_ms, energy, rhythm_period_ms: rhythm(frames) })
}

fn rhythm(frames: &[FeatureFrame]) -> Option<f64> {
    // Dominant signal among joints seen in every frame.
    let mut best: Option<(f64, Vec<f64>)> = None;
    for joint in JointId::ALL {
        for axis in 0..2 {
            let signal: Option<Vec<f64>> = frames
                .iter()
                .map(|f| {
                    let j = f.pose.as_ref()?.get(joint);
                    j.visible.then_some(if axis == 0 { j.x } else { j.y })
                })
                .collect();
            let Some(signal) = signal else { continue };
            let sd = std_dev(&signal);
            if best.as_ref().is_none_or(|(b, _)| sd > *b) {
                best = Some((sd, signal));
            }
        }
    }
    let (_, raw) = best?;
    let s = smooth(&raw);
    let mean = s.iter().sum::<f64>() / s.len() as f64;
    let sd = std_dev(&s);
    if sd < MIN_RHYTHM_STD {
        return None;
    }
    let (high, low) = (mean + 0.5 * sd, mean - 0.5 * sd);

    // Peak of each excursion that rises above `high` after dipping below `low`.
    let mut peaks: Vec<u64> = Vec::new();
    let mut armed = s[0] < high;
    let mut current: Option<(f64, u64)> = None;
    for (v, f) in s.iter().zip(frames) {
        if armed && *v > high {
            armed = false;
            current = Some((*v, f.t_ms));
        } else if let Some((peak, _)) = current {
            if *v > peak {
                current = Some((*v, f.t_ms));
            } else if *v < low {
                peaks.extend(current.take().map(|c| c.1));
                armed = true;
            }
        } else if *v < low {
            armed = true;
        }
    }
    if peaks.len() < 2 {
        return None;
    }
    let mut gaps: Vec<f64> = peaks.windows(2).map(|w| (w[1] - w[0]) as f64).collect();
    gaps.sort_by(f64::total_cmp);
    let n = gaps.len();
    Some(if n % 2 == 1 { gaps[n / 2] } else { (gaps[n / 2 - 1] + gaps[n / 2]) / 2.0 })
}

fn std_dev(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    libm::sqrt(v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n)
}

/// Three-point moving average; endpoints average what exists.
fn smooth(v: &[f64]) -> Vec<f64> {
    (0..v.len())
        .map(|i| {
            let lo = i.saturating_sub(1);
            let hi = (i + 2).min(v.len());
            v[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
        })
        .collect()
}

/// True when activity rose or fell by more than `ratio` between windows.
/// Energies below `floor` count as `floor`, so stillness does not divide by
/// zero.
pub fn activity_changed(prev: &MotionStats, cur: &MotionStats, ratio: f64, floor: f64) -> bool {
    let a = prev.energy.max(floor);
    let b = cur.energy.max(floor);
    if b / a > ratio || a / b > ratio {
        return true;
    }
    match (prev.rhythm_period_ms, cur.rhythm_period_ms) {
        (Some(p), Some(c)) => c / p > ratio || p / c > ratio,
        _ => false,
    }
}
