//! Live pose stream: newline-delimited OpenPose documents over TCP, each
//! optionally carrying `t_ms`.

use std::net::SocketAddr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Instant;

use mimic_core::pose::{Frame, FrameSource};
use serde::Deserialize;
use thiserror::Error;
use tokio::io::{AsyncBufReadExt, BufReader};
use tokio::net::TcpListener;
use tokio::sync::{broadcast, mpsc};

use crate::openpose::{skeletons_of, Person};

/// Lines longer than this are discarded unread.
pub const MAX_LINE_BYTES: usize = 1 << 20;

#[derive(Debug, Error)]
pub enum LiveError {
    #[error("cannot listen on {addr}: {source}")]
    BindFailure { addr: String, source: std::io::Error },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LiveWarning {
    Malformed { line: u64, reason: String },
    ClockSkew { line: u64, got: u64, clamped_to: u64 },
    Oversized { line: u64 },
}

impl std::fmt::Display for LiveWarning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LiveWarning::Malformed { line, reason } => write!(f, "line {line}: skipped: {reason}"),
            LiveWarning::ClockSkew { line, got, clamped_to } => {
                write!(f, "line {line}: t_ms {got} went backwards, using {clamped_to}")
            }
            LiveWarning::Oversized { line } => write!(f, "line {line}: longer than {MAX_LINE_BYTES} bytes, skipped"),
        }
    }
}

#[derive(Deserialize)]
struct LiveLine {
    people: Vec<Person>,
    #[serde(default)]
    t_ms: Option<u64>,
}

/// What one line produced.
#[derive(Debug, Clone, PartialEq)]
pub struct Decoded {
    pub frame: Option<Frame>,
    pub warning: Option<LiveWarning>,
}

/// Turns wire lines into frames with non-decreasing timestamps. Never
/// fails: bad lines become counted warnings.
#[derive(Debug, Default, Clone)]
pub struct LiveDecoder {
    last_t: Option<u64>,
    lines: u64,
    warnings: u64,
}

impl LiveDecoder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn warnings(&self) -> u64 {
        self.warnings
    }

    fn warn(&mut self, w: LiveWarning) -> Option<LiveWarning> {
        self.warnings += 1;
        tracing::warn!("live stream: {w}");
        Some(w)
    }

    /// Records a line that was too long to buffer.
    pub fn oversized(&mut self) -> LiveWarning {
        self.lines += 1;
        let line = self.lines;
        self.warn(LiveWarning::Oversized { line }).expect("warning")
    }

    /// Decodes one line (without its terminator). `arrival_ms` stands in
    /// for a missing `t_ms`. Blank lines are ignored.
    pub fn decode_line(&mut self, bytes: &[u8], arrival_ms: u64) -> Decoded {
        self.lines += 1;
        let line = self.lines;
        if bytes.iter().all(u8::is_ascii_whitespace) {
            return Decoded { frame: None, warning: None };
        }
        let parsed = serde_json::from_slice::<LiveLine>(bytes)
            .map_err(|e| e.to_string())
            .and_then(|l| skeletons_of(&l.people).map(|s| (s, l.t_ms)).map_err(|e| e.to_string()));
        let (skeletons, t_ms) = match parsed {
            Ok(v) => v,
            Err(reason) => {
                let warning = self.warn(LiveWarning::Malformed { line, reason });
                return Decoded { frame: None, warning };
            }
        };
        let wanted = t_ms.unwrap_or(arrival_ms);
        let mut warning = None;
        let t = match self.last_t {
            Some(last) if wanted < last => {
                warning = self.warn(LiveWarning::ClockSkew { line, got: wanted, clamped_to: last });
                last
            }
            _ => wanted,
        };
        self.last_t = Some(t);
        Decoded { frame: Some(Frame { timestamp_ms: t, skeletons, source: FrameSource::Live }), warning }
    }
}

/// Where decoded frames go when the consumer falls behind.
#[derive(Debug, Clone)]
pub enum FrameSink {
    /// Wait for room.
    Block(mpsc::Sender<Frame>),
    /// Overwrite the oldest queued frame.
    DropOldest(broadcast::Sender<Frame>),
}

impl FrameSink {
    async fn send(&self, frame: Frame) -> bool {
        match self {
            FrameSink::Block(tx) => tx.send(frame).await.is_ok(),
            FrameSink::DropOldest(tx) => tx.send(frame).is_ok(),
        }
    }
}

/// A bound live listener. Timestamps without `t_ms` are milliseconds since
/// `epoch`.
pub struct LiveListener {
    listener: TcpListener,
    epoch: Instant,
    warnings: Arc<AtomicU64>,
}

impl LiveListener {
    pub async fn bind(addr: &str, epoch: Instant) -> Result<Self, LiveError> {
        let listener = TcpListener::bind(addr)
            .await
            .map_err(|source| LiveError::BindFailure { addr: addr.to_string(), source })?;
        Ok(LiveListener { listener, epoch, warnings: Arc::default() })
    }

    /// Running total of skipped or corrected lines, across connections.
    pub fn warning_count(&self) -> Arc<AtomicU64> {
        self.warnings.clone()
    }

    pub fn local_addr(&self) -> std::io::Result<SocketAddr> {
        self.listener.local_addr()
    }

    /// Accepts producers until the sink closes. Connections are served one
    /// at a time so timestamps stay ordered across them.
    pub async fn run(self, sink: FrameSink) {
        let mut decoder = LiveDecoder::new();
        loop {
            let Ok((stream, peer)) = self.listener.accept().await else { continue };
            tracing::info!("live producer connected from {peer}");
            if !serve_connection(stream, &mut decoder, &sink, self.epoch, &self.warnings).await {
                return;
            }
            tracing::info!("live producer {peer} disconnected ({} warnings so far)", decoder.warnings());
        }
    }
}

/// Returns false once the sink has gone away.
async fn serve_connection<R: tokio::io::AsyncRead + Unpin>(
    stream: R,
    decoder: &mut LiveDecoder,
    sink: &FrameSink,
    epoch: Instant,
    warnings: &AtomicU64,
) -> bool {
    let mut reader = BufReader::new(stream);
    let mut buf = Vec::new();
    loop {
        buf.clear();
        match read_line_capped(&mut reader, &mut buf).await {
            Ok(LineRead::Eof) | Err(_) => return true,
            Ok(LineRead::Oversized) => {
                decoder.oversized();
                warnings.store(decoder.warnings(), Ordering::Relaxed);
            }
            Ok(LineRead::Line) => {
                let arrival = epoch.elapsed().as_millis() as u64;
                let decoded = decoder.decode_line(&buf, arrival);
                warnings.store(decoder.warnings(), Ordering::Relaxed);
                if let Some(frame) = decoded.frame {
                    if !sink.send(frame).await {
                        return false;
                    }
                }
            }
        }
    }
}

enum LineRead {
    Line,
    Oversized,
    Eof,
}

async fn read_line_capped<R: AsyncBufReadExt + Unpin>(r: &mut R, buf: &mut Vec<u8>) -> std::io::Result<LineRead> {
    let mut oversized = false;
    loop {
        let chunk = r.fill_buf().await?;
        if chunk.is_empty() {
            return Ok(if buf.is_empty() && !oversized { LineRead::Eof } else if oversized { LineRead::Oversized } else { LineRead::Line });
        }
        let (take, done) = match chunk.iter().position(|b| *b == b'\n') {
            Some(i) => (i + 1, true),
            None => (chunk.len(), false),
        };
        if !oversized {
            let body = if done { &chunk[..take - 1] } else { &chunk[..take] };
            if buf.len() + body.len() > MAX_LINE_BYTES {
                oversized = true;
                buf.clear();
            } else {
                buf.extend_from_slice(body);
            }
        }
        r.consume(take);
        if done {
            return Ok(if oversized { LineRead::Oversized } else { LineRead::Line });
        }
    }
}
