//! The console gateway: one engine task owning the pipeline, a WebSocket
//! endpoint at `/ws` speaking [`WireMessage`]s, and a frame source.
//!
//! Every connection starts with a `hello` naming its role. At most one
//! operator is connected at a time; observers only listen. `seq` counts
//! from 1 per connection and direction without gaps. The session does not
//! depend on any console being connected: windows keep expiring on the
//! engine clock.

use std::net::SocketAddr;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use axum::extract::ws::{CloseFrame, Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::Response;
use axum::routing::get;
use axum::Router;
use futures::{SinkExt, StreamExt};
use mimic_core::pose::Frame;
use mimic_core::session::{start_session, Command, EngineError, Observation, Output, Payload, SessionEvent};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;
use tokio::net::TcpListener;
use tokio::sync::{broadcast, mpsc, oneshot, watch};

use crate::config::{Backpressure, Config, ConfigError};
use crate::live::{FrameSink, LiveError, LiveListener};
use crate::pipeline::{Pipeline, PipelineOutput};
use crate::runner::record;
use crate::scenario::Scenario;
use crate::simulate::simulate;
use crate::store::{Store, StoreError};

pub const PROTOCOL_VERSION: u32 = 1;

/// Engine clock resolution while nothing else is happening.
const TICK: Duration = Duration::from_millis(50);
/// A console has this long to say hello.
const HELLO_TIMEOUT: Duration = Duration::from_secs(10);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MessageType {
    Frame,
    State,
    Outcome,
    Suggestion,
    Warning,
    Observe,
    Command,
    Hello,
}

/// One WebSocket text message, either direction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireMessage {
    #[serde(rename = "type")]
    pub kind: MessageType,
    pub seq: u64,
    #[serde(default)]
    pub body: Value,
}

impl WireMessage {
    pub fn new(kind: MessageType, seq: u64, body: Value) -> Self {
        WireMessage { kind, seq, body }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("wire message serializes")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClientRole {
    Operator,
    Observer,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct HelloBody {
    role: ClientRole,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ObserveBody {
    observation: Observation,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CommandBody {
    command: Command,
}

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("cannot bind {addr}: {source}")]
    BindFailure { addr: String, source: std::io::Error },
    #[error(transparent)]
    Live(#[from] LiveError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("cannot start session: {0}")]
    Start(EngineError),
    #[error("{0}")]
    Source(String),
}

/// Where frames come from.
pub enum Source {
    /// Newline-delimited JSON over TCP at `gateway.live_listen`.
    Live,
    /// A scenario played in engine time; `speed` > 1 runs faster than
    /// real time. The script's operator entries are applied too.
    Simulate { scenario: Scenario, seed: u64, speed: f64 },
    /// Frames pushed by the caller, stamped in engine milliseconds.
    Channel(mpsc::Receiver<Frame>),
}

pub struct ServeOptions {
    pub config: Config,
    pub participant: String,
    pub source: Source,
}

/// What a finished gateway reports.
#[derive(Debug, Clone)]
pub struct Finished {
    pub session_id: String,
    pub state: Value,
}

/// A running gateway.
pub struct Gateway {
    pub addr: SocketAddr,
    /// Bound live address, for [`Source::Live`].
    pub live_addr: Option<SocketAddr>,
    pub session_id: String,
    shutdown: Option<oneshot::Sender<()>>,
    done: tokio::task::JoinHandle<Result<Finished, GatewayError>>,
}

impl Gateway {
    /// Aborts the session and stops serving.
    pub fn shutdown(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
    }

    /// Waits for the session to end.
    pub async fn wait(&mut self) -> Result<Finished, GatewayError> {
        match (&mut self.done).await {
            Ok(r) => r,
            Err(e) => Err(GatewayError::Source(format!("engine task failed: {e}"))),
        }
    }
}

/// Engine time: wall time since start, scaled.
#[derive(Debug, Clone, Copy)]
struct Clock {
    start: Instant,
    speed: f64,
}

impl Clock {
    fn now(&self) -> u64 {
        (self.start.elapsed().as_secs_f64() * 1000.0 * self.speed) as u64
    }

    fn wall(&self, t_ms: u64) -> Instant {
        self.start + Duration::from_secs_f64(t_ms as f64 / 1000.0 / self.speed)
    }
}

enum Input {
    Frame(Frame),
    Script(SessionEvent),
    Operator { payload: Payload, reply: oneshot::Sender<Result<(), String>> },
}

/// Messages shared by every connection; each numbers them itself.
#[derive(Debug, Clone)]
struct Outgoing {
    kind: MessageType,
    body: Value,
}

#[derive(Clone)]
struct Shared {
    inputs: mpsc::Sender<Input>,
    /// Weak, so consoles see the channel close when the engine stops.
    events: broadcast::WeakSender<Arc<Outgoing>>,
    state: watch::Receiver<Value>,
    operator: Arc<AtomicBool>,
    connections: Arc<AtomicU64>,
    session_id: String,
    participant: String,
}

/// Binds the listeners, starts the session and returns at once.
pub async fn serve(opts: ServeOptions, mut store: Store) -> Result<Gateway, GatewayError> {
    let ServeOptions { config, participant, source } = opts;
    let mut pc = config.pipeline()?;
    let speed = match &source {
        Source::Simulate { scenario, speed, .. } => {
            pc.scene.model_on = scenario.model_on;
            if !(speed.is_finite() && *speed > 0.0) {
                return Err(GatewayError::Source(format!("speed must be positive, got {speed}")));
            }
            *speed
        }
        _ => 1.0,
    };
    let listen = &config.gateway.listen;
    let listener = TcpListener::bind(listen)
        .await
        .map_err(|source| GatewayError::BindFailure { addr: listen.clone(), source })?;
    let addr = listener.local_addr().map_err(|source| GatewayError::BindFailure { addr: listen.clone(), source })?;

    let id = store.next_session_id(&participant);
    let session = start_session(&store, &id, &participant, config.rubric, 0).map_err(GatewayError::Start)?;
    let clock = Clock { start: Instant::now(), speed };
    let cap = config.gateway.queue_capacity;
    let (in_tx, in_rx) = mpsc::channel(cap);
    let (ev_tx, _) = broadcast::channel(cap);
    let pipeline = Pipeline::new(session, pc);
    let (state_tx, state_rx) = watch::channel(state_body(&pipeline));

    let mut live_addr = None;
    let mut sim_frames = None;
    match source {
        Source::Live => {
            let live = LiveListener::bind(&config.gateway.live_listen, clock.start).await?;
            live_addr = Some(live.local_addr().map_err(|source| GatewayError::BindFailure {
                addr: config.gateway.live_listen.clone(),
                source,
            })?);
            spawn_live(live, config.gateway.backpressure, cap, in_tx.clone());
        }
        Source::Simulate { scenario, seed, .. } => {
            let sim = simulate(&scenario, seed).map_err(|e| GatewayError::Source(e.to_string()))?;
            sim_frames = Some(sim);
        }
        Source::Channel(mut rx) => {
            let tx = in_tx.clone();
            tokio::spawn(async move {
                while let Some(f) = rx.recv().await {
                    if tx.send(Input::Frame(f)).await.is_err() {
                        break;
                    }
                }
            });
        }
    }
    store.create_session(&id, &participant, config.rubric, 0)?;
    if let Some(sim) = sim_frames {
        tokio::spawn(play(sim, clock, in_tx.clone()));
    }

    let shared = Shared {
        inputs: in_tx,
        events: ev_tx.downgrade(),
        state: state_rx,
        operator: Arc::new(AtomicBool::new(false)),
        connections: Arc::new(AtomicU64::new(0)),
        session_id: id.clone(),
        participant,
    };
    let app = Router::new().route("/ws", get(ws_handler)).with_state(shared);
    let (stop_http_tx, stop_http_rx) = oneshot::channel::<()>();
    tokio::spawn(async move {
        let _ = axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = stop_http_rx.await;
            })
            .await;
    });

    let (shutdown_tx, shutdown_rx) = oneshot::channel();
    let engine = Engine {
        pipeline,
        store,
        id: id.clone(),
        clock,
        events: ev_tx,
        state: state_tx,
        frame_gap_ms: 1000.0 / config.gateway.max_frame_rate,
        last_frame: None,
        pending_mirror: None,
    };
    let done = tokio::spawn(async move {
        let r = engine.run(in_rx, shutdown_rx).await;
        // Give consoles a moment to read the final state.
        tokio::time::sleep(Duration::from_millis(200)).await;
        let _ = stop_http_tx.send(());
        r
    });
    Ok(Gateway { addr, live_addr, session_id: id, shutdown: Some(shutdown_tx), done })
}

fn spawn_live(live: LiveListener, mode: Backpressure, cap: usize, inputs: mpsc::Sender<Input>) {
    match mode {
        Backpressure::Block => {
            let (tx, mut rx) = mpsc::channel(cap);
            tokio::spawn(live.run(FrameSink::Block(tx)));
            tokio::spawn(async move {
                while let Some(f) = rx.recv().await {
                    if inputs.send(Input::Frame(f)).await.is_err() {
                        break;
                    }
                }
            });
        }
        Backpressure::DropOldest => {
            let (tx, mut rx) = broadcast::channel(cap);
            tokio::spawn(live.run(FrameSink::DropOldest(tx)));
            tokio::spawn(async move {
                loop {
                    match rx.recv().await {
                        Ok(f) => {
                            if inputs.send(Input::Frame(f)).await.is_err() {
                                break;
                            }
                        }
                        Err(broadcast::error::RecvError::Lagged(n)) => tracing::warn!("dropped {n} live frames"),
                        Err(broadcast::error::RecvError::Closed) => break,
                    }
                }
            });
        }
    }
}

/// Feeds a simulation at its own pace.
async fn play(sim: crate::simulate::Simulation, clock: Clock, inputs: mpsc::Sender<Input>) {
    let mut frames = sim.frames.into_iter().peekable();
    let mut events = sim.events.into_iter().peekable();
    loop {
        // Script events go first on equal timestamps, as in headless runs.
        let next = match (frames.peek(), events.peek()) {
            (Some(f), Some(e)) if e.t_ms <= f.timestamp_ms => Input::Script(events.next().unwrap()),
            (Some(_), _) => Input::Frame(frames.next().unwrap()),
            (None, Some(_)) => Input::Script(events.next().unwrap()),
            (None, None) => return,
        };
        let t = match &next {
            Input::Frame(f) => f.timestamp_ms,
            Input::Script(e) => e.t_ms,
            Input::Operator { .. } => unreachable!(),
        };
        tokio::time::sleep_until(clock.wall(t).into()).await;
        if inputs.send(next).await.is_err() {
            return;
        }
    }
}

fn state_body(p: &Pipeline) -> Value {
    let s = p.session();
    let mut v = serde_json::to_value(s.snapshot()).expect("snapshot serializes");
    let extra = json!({
        "with_objects": s.with_objects(),
        "mirroring_triggered": s.mirroring_triggered(),
        "warnings": s.warnings(),
        "log_len": s.log().len(),
        "last_entry": s.log().last(),
    });
    if let (Value::Object(m), Value::Object(e)) = (&mut v, extra) {
        m.extend(e);
    }
    v
}

struct Engine {
    pipeline: Pipeline,
    store: Store,
    id: String,
    clock: Clock,
    events: broadcast::Sender<Arc<Outgoing>>,
    state: watch::Sender<Value>,
    frame_gap_ms: f64,
    last_frame: Option<u64>,
    pending_mirror: Option<Value>,
}

impl Engine {
    async fn run(
        mut self,
        mut inputs: mpsc::Receiver<Input>,
        mut shutdown: oneshot::Receiver<()>,
    ) -> Result<Finished, GatewayError> {
        let mut ticker = tokio::time::interval(TICK);
        ticker.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Skip);
        while self.pipeline.is_running() {
            tokio::select! {
                Some(input) = inputs.recv() => self.apply(input),
                _ = ticker.tick() => self.pipeline.tick(self.clock.now()),
                _ = &mut shutdown => {
                    let t = self.now();
                    let _ = self.pipeline.push_event(SessionEvent::command(t, Command::Abort));
                }
            }
            self.publish()?;
        }
        self.store.close_session(&self.id, self.pipeline.session())?;
        Ok(Finished { session_id: self.id, state: self.state.borrow().clone() })
    }

    fn now(&self) -> u64 {
        self.clock.now().max(self.pipeline.session().clock())
    }

    fn apply(&mut self, input: Input) {
        match input {
            Input::Frame(f) => self.pipeline.push_frame(&f),
            Input::Script(e) => {
                if let Err(err) = self.pipeline.push_event(e) {
                    tracing::warn!("script event rejected: {err}");
                }
            }
            Input::Operator { payload, reply } => {
                let t = self.now();
                let r = self.pipeline.push_event(SessionEvent::new(t, payload)).map_err(|e| e.to_string());
                let _ = reply.send(r);
            }
        }
    }

    fn broadcast(&self, kind: MessageType, body: Value) {
        // No receivers is fine; the session runs unattended.
        let _ = self.events.send(Arc::new(Outgoing { kind, body }));
    }

    /// Records and fans out whatever the pipeline produced.
    fn publish(&mut self) -> Result<(), GatewayError> {
        let outputs = self.pipeline.take_outputs();
        if outputs.is_empty() {
            return Ok(());
        }
        record(&mut self.store, &self.id, &outputs)?;
        let mut changed = false;
        for o in outputs {
            match o {
                PipelineOutput::Frame(f) => {
                    let due = self.last_frame.is_none_or(|last| (f.t_ms - last.min(f.t_ms)) as f64 >= self.frame_gap_ms);
                    if due {
                        self.last_frame = Some(f.t_ms);
                        self.broadcast(MessageType::Frame, serde_json::to_value(&f).expect("frame serializes"));
                        if let Some(cmd) = self.pending_mirror.take() {
                            self.broadcast(MessageType::Command, cmd);
                        }
                    }
                }
                PipelineOutput::MirrorCommand { t_ms, command } => {
                    self.pending_mirror = Some(json!({ "kind": "mirror_pose", "t_ms": t_ms, "targets": command.targets }));
                }
                PipelineOutput::Engine(out) => {
                    changed = true;
                    match out {
                        Output::Outcome(o) => {
                            self.broadcast(MessageType::Outcome, serde_json::to_value(&o).expect("outcome serializes"))
                        }
                        Output::Suggestion { movement, stats, t_ms } => self.broadcast(
                            MessageType::Suggestion,
                            json!({ "movement": movement, "stats": stats, "t_ms": t_ms }),
                        ),
                        Output::Warning { message, t_ms } => {
                            self.broadcast(MessageType::Warning, json!({ "message": message, "t_ms": t_ms }))
                        }
                        Output::MirroringActive { movement, active, t_ms } => self.broadcast(
                            MessageType::Command,
                            json!({ "kind": "mirroring", "movement": movement, "active": active, "t_ms": t_ms }),
                        ),
                        _ => {}
                    }
                }
            }
        }
        if changed {
            self.state.send_replace(state_body(&self.pipeline));
            self.broadcast(MessageType::State, self.state.borrow().clone());
        }
        Ok(())
    }
}

async fn ws_handler(ws: WebSocketUpgrade, State(shared): State<Shared>) -> Response {
    ws.on_upgrade(move |socket| connection(socket, shared))
}

/// Numbers outgoing messages for one connection.
struct Outbox {
    seq: u64,
}

impl Outbox {
    fn next(&mut self, kind: MessageType, body: Value) -> Message {
        self.seq += 1;
        Message::Text(WireMessage::new(kind, self.seq, body).to_json().into())
    }
}

fn warning(message: impl Into<String>, in_reply_to: Option<u64>) -> Value {
    json!({ "message": message.into(), "in_reply_to": in_reply_to })
}

/// Waits for the client's hello. Non-text frames other than close are
/// skipped.
async fn read_hello(socket: &mut WebSocket) -> Result<(u64, ClientRole), String> {
    loop {
        let msg = match tokio::time::timeout(HELLO_TIMEOUT, socket.recv()).await {
            Err(_) => return Err("no hello received".into()),
            Ok(None) | Ok(Some(Err(_))) | Ok(Some(Ok(Message::Close(_)))) => return Err(String::new()),
            Ok(Some(Ok(m))) => m,
        };
        let Message::Text(text) = msg else { continue };
        let wire: WireMessage = serde_json::from_str(&text).map_err(|e| format!("malformed message: {e}"))?;
        if wire.kind != MessageType::Hello {
            return Err("the first message must be hello".into());
        }
        let hello: HelloBody = serde_json::from_value(wire.body).map_err(|e| format!("malformed hello: {e}"))?;
        return Ok((wire.seq, hello.role));
    }
}

async fn connection(mut socket: WebSocket, shared: Shared) {
    let mut out = Outbox { seq: 0 };
    let (hello_seq, role) = match read_hello(&mut socket).await {
        Ok(h) => h,
        Err(reason) => {
            if !reason.is_empty() {
                let _ = socket.send(out.next(MessageType::Warning, warning(&reason, None))).await;
            }
            let _ = socket.send(Message::Close(Some(CloseFrame { code: 1002, reason: reason.into() }))).await;
            return;
        }
    };
    if role == ClientRole::Operator && shared.operator.swap(true, Ordering::SeqCst) {
        let reason = "an operator is already connected";
        let body = json!({ "accepted": false, "reason": reason });
        let _ = socket.send(out.next(MessageType::Hello, body)).await;
        let _ = socket.send(Message::Close(Some(CloseFrame { code: 1008, reason: reason.into() }))).await;
        return;
    }
    let conn = shared.connections.fetch_add(1, Ordering::SeqCst) + 1;
    tracing::info!("console {conn} connected as {role:?}");
    // Subscribe before reading the state so nothing falls in between.
    let events = shared.events.upgrade().map(|tx| tx.subscribe());
    let state = shared.state.borrow().clone();
    let body = json!({
        "accepted": true,
        "role": role,
        "session_id": shared.session_id,
        "participant": shared.participant,
        "protocol": PROTOCOL_VERSION,
    });
    let (mut tx, rx) = socket.split();
    let greeted = async {
        tx.send(out.next(MessageType::Hello, body)).await?;
        tx.send(out.next(MessageType::State, state)).await
    };
    match (greeted.await, events) {
        (Ok(()), Some(events)) => serve_console(tx, rx, events, out, &shared, role, hello_seq).await,
        // The session is over: the state just sent is final.
        (Ok(()), None) => {
            let _ = tx.send(Message::Close(None)).await;
        }
        _ => {}
    }
    if role == ClientRole::Operator {
        shared.operator.store(false, Ordering::SeqCst);
    }
    tracing::info!("console {conn} disconnected");
}

async fn serve_console(
    mut tx: futures::stream::SplitSink<WebSocket, Message>,
    mut rx: futures::stream::SplitStream<WebSocket>,
    mut events: broadcast::Receiver<Arc<Outgoing>>,
    mut out: Outbox,
    shared: &Shared,
    role: ClientRole,
    mut last_seq: u64,
) {
    loop {
        tokio::select! {
            ev = events.recv() => {
                let msg = match ev {
                    Ok(o) => out.next(o.kind, o.body.clone()),
                    // Too slow: skip ahead and resend the whole state.
                    Err(broadcast::error::RecvError::Lagged(n)) => {
                        tracing::warn!("console lagged by {n} messages; resyncing");
                        out.next(MessageType::State, shared.state.borrow().clone())
                    }
                    Err(broadcast::error::RecvError::Closed) => {
                        let _ = tx.send(Message::Close(None)).await;
                        return;
                    }
                };
                if tx.send(msg).await.is_err() {
                    return;
                }
            }
            msg = rx.next() => {
                let text = match msg {
                    None | Some(Err(_)) | Some(Ok(Message::Close(_))) => return,
                    Some(Ok(Message::Text(t))) => t,
                    Some(Ok(_)) => continue,
                };
                let reply = handle_client(&text, shared, role, &mut last_seq).await;
                if let Some(body) = reply {
                    if tx.send(out.next(MessageType::Warning, body)).await.is_err() {
                        return;
                    }
                }
            }
        }
    }
}

/// Applies one client message. Returns a warning body when it was refused.
async fn handle_client(text: &str, shared: &Shared, role: ClientRole, last_seq: &mut u64) -> Option<Value> {
    let wire: WireMessage = match serde_json::from_str(text) {
        Ok(w) => w,
        Err(e) => return Some(warning(format!("malformed message: {e}"), None)),
    };
    let seq = wire.seq;
    if seq != *last_seq + 1 {
        let expected = *last_seq + 1;
        *last_seq = (*last_seq).max(seq);
        return Some(warning(format!("expected seq {expected}, got {seq}"), Some(seq)));
    }
    *last_seq = seq;
    if role == ClientRole::Observer {
        return Some(warning("observers cannot send", Some(seq)));
    }
    let payload = match wire.kind {
        MessageType::Observe => match serde_json::from_value::<ObserveBody>(wire.body) {
            Ok(b) => Payload::Observation(b.observation),
            Err(e) => return Some(warning(format!("malformed observe: {e}"), Some(seq))),
        },
        MessageType::Command => match serde_json::from_value::<CommandBody>(wire.body) {
            Ok(b) => Payload::Command(b.command),
            Err(e) => return Some(warning(format!("malformed command: {e}"), Some(seq))),
        },
        other => return Some(warning(format!("clients cannot send {other:?} messages"), Some(seq))),
    };
    let (reply_tx, reply_rx) = oneshot::channel();
    if shared.inputs.send(Input::Operator { payload, reply: reply_tx }).await.is_err() {
        return Some(warning("session has ended", Some(seq)));
    }
    match reply_rx.await {
        Ok(Ok(())) => None,
        Ok(Err(e)) => Some(warning(e, Some(seq))),
        Err(_) => Some(warning("session has ended", Some(seq))),
    }
}
