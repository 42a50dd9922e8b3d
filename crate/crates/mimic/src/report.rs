//! Per-session result tables, as aligned text or JSON. A report depends on
//! the stored records only.

use mimic_core::session::{Code, CodeFamily, PhaseKind};
use serde::{Deserialize, Serialize};

use crate::store::{SessionMeta, SessionStatus, Store};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub session: String,
    pub participant: String,
    /// As registered; never recomputed.
    pub cars_score: Option<f64>,
    pub greetings: Option<Code>,
    pub pairing: Option<Code>,
    pub imitation: Option<Code>,
    pub status: SessionStatus,
    pub with_objects: bool,
    pub mirroring_triggered: bool,
    pub duration_ms: Option<u64>,
    pub warnings: Vec<String>,
    pub comments: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub rows: Vec<ReportRow>,
}

fn phase_code(meta: &SessionMeta, phase: PhaseKind) -> Option<Code> {
    meta.outcomes.iter().rev().find(|o| o.phase == phase && o.movement.is_none()).map(|o| o.code)
}

fn fmt_duration(ms: u64) -> String {
    let s = ms / 1000;
    format!("{}m{:02}s", s / 60, s % 60)
}

fn comments(meta: &SessionMeta, imitation: Option<Code>) -> Vec<String> {
    let mut out = Vec::new();
    match imitation {
        Some(c) if c.family() == CodeFamily::A => {
            out.push(if meta.with_objects { "imitation with objects" } else { "imitation without objects" }.into());
        }
        Some(Code::ThreeB) => out.push("recognition of being imitated".into()),
        Some(Code::TwoB) => out.push("increased attention when imitated".into()),
        Some(Code::OneB) => out.push("no reaction to being imitated".into()),
        _ => {}
    }
    if meta.mirroring_triggered {
        out.push("mirroring triggered".into());
    }
    if meta.status == SessionStatus::Aborted {
        let last = meta.outcomes.last().map(|o| o.phase);
        let during = match last {
            None => "greetings",
            Some(PhaseKind::Greetings) => "pairing",
            Some(_) => "imitation",
        };
        out.push(format!("aborted during {during}"));
    }
    if let Some(d) = meta.duration_ms() {
        out.push(format!("duration {}", fmt_duration(d)));
    }
    let n = meta.warnings.len();
    if n > 0 {
        out.push(format!("{n} warning{}", if n == 1 { "" } else { "s" }));
    }
    out
}

pub fn row(store: &Store, meta: &SessionMeta) -> ReportRow {
    let imitation = phase_code(meta, PhaseKind::Imitation);
    ReportRow {
        session: meta.id.clone(),
        participant: meta.participant.clone(),
        cars_score: store.participant(&meta.participant).map(|p| p.cars_score),
        greetings: phase_code(meta, PhaseKind::Greetings),
        pairing: phase_code(meta, PhaseKind::Pairing),
        imitation,
        status: meta.status,
        with_objects: meta.with_objects,
        mirroring_triggered: meta.mirroring_triggered,
        duration_ms: meta.duration_ms(),
        warnings: meta.warnings.clone(),
        comments: comments(meta, imitation),
    }
}

/// One row per closed session, in session id order.
pub fn report(store: &Store) -> Report {
    let rows = store.sessions().filter(|m| m.status != SessionStatus::Open).map(|m| row(store, m)).collect();
    Report { rows }
}

impl Report {
    /// Aligned text table; empty cells show as `-`.
    pub fn to_text(&self) -> String {
        let header = ["participant", "greetings", "pairing", "imitation", "comments"].map(String::from);
        let code = |c: Option<Code>| c.map_or("-".to_string(), |c| c.as_str().to_string());
        let body: Vec<[String; 5]> = self
            .rows
            .iter()
            .map(|r| {
                let comments = if r.comments.is_empty() { "-".into() } else { r.comments.join("; ") };
                [r.participant.clone(), code(r.greetings), code(r.pairing), code(r.imitation), comments]
            })
            .collect();
        let mut widths = [0usize; 5];
        for cells in std::iter::once(&header).chain(&body) {
            for (w, c) in widths.iter_mut().zip(cells) {
                *w = (*w).max(c.chars().count());
            }
        }
        let mut out = String::new();
        for cells in std::iter::once(&header).chain(&body) {
            let line: Vec<String> = cells
                .iter()
                .zip(widths)
                .enumerate()
                .map(|(i, (c, w))| if i == 4 { c.clone() } else { format!("{c:<w$}") })
                .collect();
            out.push_str(line.join(" | ").trim_end());
            out.push('\n');
        }
        out
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

/// Splits an aligned text row back into trimmed cells.
pub fn parse_text_row(line: &str) -> Vec<&str> {
    line.split(" | ").map(str::trim).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use mimic_core::session::{start_session, Command, Observation, RubricConfig, SessionEvent};

    #[test]
    fn aborted_in_pairing_leaves_blanks() {
        let dir = tempfile::tempdir().unwrap();
        let mut store = Store::open(dir.path()).unwrap();
        store.ensure_reference_participants().unwrap();
        store.create_session("G-0001", "G", RubricConfig::default(), 0).unwrap();
        let mut s = start_session(&store, "G-0001", "G", RubricConfig::default(), 0).unwrap();
        s.step(SessionEvent::command(0, Command::AdvancePhase)).unwrap();
        s.step(SessionEvent::observation(1000, Observation::HandReach)).unwrap();
        s.step(SessionEvent::command(2000, Command::AdvancePhase)).unwrap();
        s.step(SessionEvent::command(65_000, Command::Abort)).unwrap();
        for e in s.log() {
            store.append("G-0001", e).unwrap();
        }
        store.close_session("G-0001", &s).unwrap();
        let r = report(&store);
        let text = r.to_text();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(parse_text_row(lines[0])[..4], ["participant", "greetings", "pairing", "imitation"]);
        let cells = parse_text_row(lines[1]);
        assert_eq!(cells[..4], ["G", "3", "-", "-"]);
        assert!(cells[4].contains("aborted during pairing"), "{text}");
        assert!(cells[4].contains("duration 1m05s"), "{text}");
        assert_eq!(r.rows[0].cars_score, Some(46.0));
        assert_eq!(text, report(&store).to_text());
    }
}
