//! On-disk session store.
//!
//! ```text
//! <root>/index.json           participants and session metadata
//! <root>/sessions/<id>.jsonl  one log entry per line, append-only
//! ```
//!
//! The index is replaced atomically on every change. Log lines are synced
//! before `append` returns, and a torn final line (a crash mid-write) is
//! ignored on read.

use std::collections::{BTreeMap, HashMap};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use mimic_core::session::{
    replay, EngineError, EngineStatus, LogEntry, ParticipantDirectory, PhaseOutcome, RubricConfig, Session,
};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: corrupt store data: {reason}")]
    Corrupt { path: PathBuf, reason: String },
    #[error("id {0:?} is already registered")]
    DuplicateId(String),
    #[error("participant {0:?} is not registered")]
    UnknownParticipant(String),
    #[error("no session {0:?}")]
    UnknownSession(String),
    #[error("session {0:?} is closed")]
    SessionClosed(String),
    #[error("invalid profile: {0}")]
    InvalidProfile(&'static str),
    #[error("session {session}: log does not replay: {source}")]
    Replay { session: String, source: EngineError },
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |source| StoreError::Io { path: path.to_path_buf(), source }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticipantProfile {
    pub id: String,
    /// Years.
    pub biological_age: f64,
    /// Neurodevelopmental age in years; may be fractional.
    pub nd_age: f64,
    /// CARS points, stored as given.
    pub cars_score: f64,
    /// `None` when not recorded.
    #[serde(default)]
    pub verbal: Option<bool>,
    #[serde(default)]
    pub notes: String,
}

impl ParticipantProfile {
    pub fn validate(&self) -> Result<(), StoreError> {
        if self.id.is_empty() || !self.id.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
            return Err(StoreError::InvalidProfile("id must be non-empty ASCII letters, digits or '_'"));
        }
        if !(self.biological_age > 0.0 && self.nd_age > 0.0) {
            return Err(StoreError::InvalidProfile("ages must be positive"));
        }
        if self.cars_score.is_nan() || self.cars_score <= 0.0 {
            return Err(StoreError::InvalidProfile("cars_score must be positive"));
        }
        Ok(())
    }
}

/// The four participants of the reference study.
pub fn reference_participants() -> Vec<ParticipantProfile> {
    let p = |id: &str, bio: f64, nd: f64, cars: f64| ParticipantProfile {
        id: id.into(),
        biological_age: bio,
        nd_age: nd,
        cars_score: cars,
        verbal: None,
        notes: String::new(),
    };
    vec![
        p("F", 18.0, 9.0, 33.0),
        p("G", 14.0, 4.0, 46.0),
        p("H", 13.0, 5.0, 38.0),
        p("I", 12.0, 0.5, 47.0),
    ]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionStatus {
    Open,
    Completed,
    Aborted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionMeta {
    pub id: String,
    pub participant: String,
    pub started_at: u64,
    pub rubric: RubricConfig,
    pub status: SessionStatus,
    #[serde(default)]
    pub ended_at: Option<u64>,
    #[serde(default)]
    pub outcomes: Vec<PhaseOutcome>,
    #[serde(default)]
    pub warnings: Vec<String>,
    #[serde(default)]
    pub with_objects: bool,
    #[serde(default)]
    pub mirroring_triggered: bool,
}

impl SessionMeta {
    pub fn duration_ms(&self) -> Option<u64> {
        self.ended_at.map(|e| e.saturating_sub(self.started_at))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
struct Index {
    participants: BTreeMap<String, ParticipantProfile>,
    sessions: BTreeMap<String, SessionMeta>,
}

pub struct Store {
    root: PathBuf,
    index: Index,
    open_logs: HashMap<String, File>,
}

impl Store {
    /// Opens the store at `root`, creating it if needed.
    pub fn open(root: impl AsRef<Path>) -> Result<Store, StoreError> {
        let root = root.as_ref().to_path_buf();
        let sessions = root.join("sessions");
        std::fs::create_dir_all(&sessions).map_err(io(&sessions))?;
        let index_path = root.join("index.json");
        let index = match std::fs::read(&index_path) {
            Ok(bytes) => serde_json::from_slice(&bytes)
                .map_err(|e| StoreError::Corrupt { path: index_path.clone(), reason: e.to_string() })?,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Index::default(),
            Err(e) => return Err(io(&index_path)(e)),
        };
        Ok(Store { root, index, open_logs: HashMap::new() })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn log_path(&self, id: &str) -> PathBuf {
        self.root.join("sessions").join(format!("{id}.jsonl"))
    }

    fn save_index(&self) -> Result<(), StoreError> {
        let path = self.root.join("index.json");
        let mut tmp = tempfile::NamedTempFile::new_in(&self.root).map_err(io(&self.root))?;
        let text = serde_json::to_string_pretty(&self.index).expect("index serializes");
        tmp.write_all(text.as_bytes()).map_err(io(tmp.path()))?;
        tmp.as_file().sync_all().map_err(io(tmp.path()))?;
        tmp.persist(&path).map_err(|e| io(&path)(e.error))?;
        Ok(())
    }

    pub fn register_participant(&mut self, profile: ParticipantProfile) -> Result<(), StoreError> {
        profile.validate()?;
        if self.index.participants.contains_key(&profile.id) {
            return Err(StoreError::DuplicateId(profile.id));
        }
        self.index.participants.insert(profile.id.clone(), profile);
        self.save_index()
    }

    /// Registers whichever reference participants are missing.
    pub fn ensure_reference_participants(&mut self) -> Result<(), StoreError> {
        for p in reference_participants() {
            if !self.index.participants.contains_key(&p.id) {
                self.register_participant(p)?;
            }
        }
        Ok(())
    }

    pub fn participant(&self, id: &str) -> Option<&ParticipantProfile> {
        self.index.participants.get(id)
    }

    pub fn participants(&self) -> impl Iterator<Item = &ParticipantProfile> {
        self.index.participants.values()
    }

    pub fn session(&self, id: &str) -> Option<&SessionMeta> {
        self.index.sessions.get(id)
    }

    /// Sessions in id order.
    pub fn sessions(&self) -> impl Iterator<Item = &SessionMeta> {
        self.index.sessions.values()
    }

    /// Next free id of the form `F-0001`.
    pub fn next_session_id(&self, participant: &str) -> String {
        (1..)
            .map(|n| format!("{participant}-{n:04}"))
            .find(|id| !self.index.sessions.contains_key(id))
            .expect("unbounded")
    }

    /// Creates an empty, open session.
    pub fn create_session(
        &mut self,
        id: &str,
        participant: &str,
        rubric: RubricConfig,
        started_at: u64,
    ) -> Result<(), StoreError> {
        if !self.index.participants.contains_key(participant) {
            return Err(StoreError::UnknownParticipant(participant.into()));
        }
        if self.index.sessions.contains_key(id) {
            return Err(StoreError::DuplicateId(id.into()));
        }
        let path = self.log_path(id);
        let file = OpenOptions::new().create_new(true).append(true).open(&path).map_err(io(&path))?;
        self.open_logs.insert(id.into(), file);
        let meta = SessionMeta {
            id: id.into(),
            participant: participant.into(),
            started_at,
            rubric,
            status: SessionStatus::Open,
            ended_at: None,
            outcomes: Vec::new(),
            warnings: Vec::new(),
            with_objects: false,
            mirroring_triggered: false,
        };
        self.index.sessions.insert(id.into(), meta);
        self.save_index()
    }

    /// Durably appends one entry to an open session's log.
    pub fn append(&mut self, id: &str, entry: &LogEntry) -> Result<(), StoreError> {
        let meta = self.index.sessions.get(id).ok_or_else(|| StoreError::UnknownSession(id.into()))?;
        if meta.status != SessionStatus::Open {
            return Err(StoreError::SessionClosed(id.into()));
        }
        let path = self.log_path(id);
        if !self.open_logs.contains_key(id) {
            trim_torn_tail(&path).map_err(io(&path))?;
            let f = OpenOptions::new().append(true).open(&path).map_err(io(&path))?;
            self.open_logs.insert(id.into(), f);
        }
        let file = self.open_logs.get_mut(id).expect("just opened");
        let mut line = serde_json::to_string(entry).expect("log entry serializes");
        line.push('\n');
        file.write_all(line.as_bytes()).map_err(io(&path))?;
        file.sync_data().map_err(io(&path))?;
        Ok(())
    }

    /// Marks a session closed with the engine's final state.
    pub fn close_session(&mut self, id: &str, session: &Session) -> Result<(), StoreError> {
        let meta = self.index.sessions.get_mut(id).ok_or_else(|| StoreError::UnknownSession(id.into()))?;
        if meta.status != SessionStatus::Open {
            return Err(StoreError::SessionClosed(id.into()));
        }
        meta.status = match session.status() {
            EngineStatus::Aborted => SessionStatus::Aborted,
            _ => SessionStatus::Completed,
        };
        meta.ended_at = Some(session.clock());
        meta.outcomes = session.outcomes().to_vec();
        meta.warnings = session.warnings().to_vec();
        meta.with_objects = session.with_objects();
        meta.mirroring_triggered = session.mirroring_triggered();
        self.open_logs.remove(id);
        self.save_index()
    }

    /// Reads a session log. Readers of an open session see a prefix.
    pub fn read_log(&self, id: &str) -> Result<Vec<LogEntry>, StoreError> {
        if !self.index.sessions.contains_key(id) {
            return Err(StoreError::UnknownSession(id.into()));
        }
        let path = self.log_path(id);
        let mut reader = BufReader::new(File::open(&path).map_err(io(&path))?);
        let mut out = Vec::new();
        let mut line = String::new();
        loop {
            line.clear();
            if reader.read_line(&mut line).map_err(io(&path))? == 0 || !line.ends_with('\n') {
                break;
            }
            let entry = serde_json::from_str(&line).map_err(|e| StoreError::Corrupt {
                path: path.clone(),
                reason: format!("line {}: {e}", out.len() + 1),
            })?;
            out.push(entry);
        }
        Ok(out)
    }

    /// Re-runs the engine over a stored log.
    pub fn replay_session(&self, id: &str) -> Result<Session, StoreError> {
        let meta = self.session(id).ok_or_else(|| StoreError::UnknownSession(id.into()))?;
        let log = self.read_log(id)?;
        replay(&meta.id, &meta.participant, meta.rubric, meta.started_at, &log)
            .map_err(|source| StoreError::Replay { session: id.into(), source })
    }
}

/// Cuts a partial last line left by a crash, so appends start clean.
fn trim_torn_tail(path: &Path) -> std::io::Result<()> {
    let bytes = std::fs::read(path)?;
    if bytes.last().is_some_and(|&b| b != b'\n') {
        let keep = bytes.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1);
        let f = OpenOptions::new().write(true).open(path)?;
        f.set_len(keep as u64)?;
        f.sync_data()?;
    }
    Ok(())
}

impl ParticipantDirectory for Store {
    fn is_registered(&self, participant_id: &str) -> bool {
        self.index.participants.contains_key(participant_id)
    }
}
