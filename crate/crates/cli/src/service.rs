//! WebSocket endpoint at `/ws`.
//!
//! One task owns the simulator (or the replay) and is the only producer of
//! outbound messages; it broadcasts each one serialised once. Clients get the
//! latest snapshot on connect and then the broadcast stream. Inbound events go
//! through one bounded queue; the simulator drains it every tick and keeps the
//! latest event per target.

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::sync::Arc;
use std::time::Duration;

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::Response;
use axum::routing::get;
use axum::Router;
use futures_util::{SinkExt, StreamExt};
use prexel_core::daq::TimedFrame;
use prexel_core::pipeline::{HostEvent, HostPipeline};
use prexel_core::robot::{update_avoidance, AvoidanceConfig, AvoidanceState};
use prexel_core::session::{Mode, Session, SessionConfig, StepOutput};
use tokio::sync::{broadcast, mpsc, oneshot, watch, Notify};
use tokio::task::JoinHandle;
use tokio::time::{Instant, MissedTickBehavior};

use crate::messages::{distance_of, hex, parse_client, ClientEvent, Layout, ServerMessage, Source, SCHEMA_VERSION};
use crate::CliError;

/// Outbound messages buffered per subscriber before it starts missing some.
const SUBSCRIBER_QUEUE: usize = 1024;
const INBOX: usize = 256;
const HEARTBEAT: Duration = Duration::from_secs(1);
const TICK: Duration = Duration::from_millis(2);
/// Bound on catch-up work per tick.
const MAX_STEPS_PER_TICK: usize = 2000;
const DEFAULT_TARE_S: f64 = 1.0;

#[derive(Clone)]
struct Outbound {
    seq: u64,
    json: Arc<str>,
}

impl Outbound {
    fn new(msg: &ServerMessage) -> Self {
        Self {
            seq: msg.seq().unwrap_or(0),
            json: serde_json::to_string(msg).expect("messages serialise").into(),
        }
    }
}

#[derive(Clone)]
struct AppState {
    tx: broadcast::Sender<Outbound>,
    snapshot: watch::Receiver<Outbound>,
    inbox: Option<mpsc::Sender<ClientEvent>>,
    layout: Layout,
    /// Signalled on every new subscriber.
    joined: Arc<Notify>,
}

pub struct ServiceHandle {
    pub addr: SocketAddr,
    stop: Option<oneshot::Sender<()>>,
    driver: JoinHandle<Result<(), CliError>>,
    server: JoinHandle<()>,
}

impl ServiceHandle {
    /// Stops the simulator and the acceptor.
    pub async fn shutdown(mut self) -> Result<(), CliError> {
        if let Some(s) = self.stop.take() {
            let _ = s.send(());
        }
        let r = (&mut self.driver).await.unwrap_or(Ok(()));
        self.server.abort();
        r
    }

    /// Resolves when the driver ends on its own (end of a replay, or an error).
    pub async fn finished(mut self) -> Result<(), CliError> {
        let r = (&mut self.driver).await.unwrap_or(Ok(()));
        self.server.abort();
        r
    }
}

async fn bind(listen: SocketAddr, state: AppState) -> Result<(SocketAddr, JoinHandle<()>), CliError> {
    let listener = tokio::net::TcpListener::bind(listen)
        .await
        .map_err(|e| CliError::Data(format!("{listen}: {e}")))?;
    let addr = listener.local_addr()?;
    let app = Router::new().route("/ws", get(upgrade)).with_state(state);
    let server = tokio::spawn(async move {
        let _ = axum::serve(listener, app).await;
    });
    Ok((addr, server))
}

async fn upgrade(ws: WebSocketUpgrade, State(state): State<AppState>) -> Response {
    ws.on_upgrade(move |socket| client(socket, state))
}

fn check_event(ev: &ClientEvent, layout: Layout) -> Result<(), String> {
    match ev {
        ClientEvent::Press { row, col, force } => {
            if *row >= layout.rows || *col >= layout.cols {
                Err(format!("no prexel ({row}, {col}) on a {}x{} layout", layout.rows, layout.cols))
            } else if !(force.is_finite() && *force >= 0.0) {
                Err(format!("bad force {force}"))
            } else {
                Ok(())
            }
        }
        ClientEvent::Hand { distance: Some(d) } if !(d.is_finite() && *d > 0.0) => Err(format!("bad distance {d}")),
        ClientEvent::Tare { seconds: Some(s) } if !(s.is_finite() && *s > 0.0) => Err(format!("bad tare window {s}")),
        _ => Ok(()),
    }
}

async fn client(socket: WebSocket, state: AppState) {
    let mut rx = state.tx.subscribe();
    let snap = state.snapshot.borrow().clone();
    let (mut sink, mut stream) = socket.split();
    if sink.send(Message::Text(snap.json.as_ref().into())).await.is_err() {
        return;
    }
    let mut last = snap.seq;
    state.joined.notify_one();
    loop {
        tokio::select! {
            out = rx.recv() => match out {
                Ok(m) => {
                    if m.seq <= last {
                        continue;
                    }
                    last = m.seq;
                    if sink.send(Message::Text(m.json.as_ref().into())).await.is_err() {
                        return;
                    }
                }
                Err(broadcast::error::RecvError::Lagged(_)) => continue,
                Err(broadcast::error::RecvError::Closed) => {
                    let _ = sink.close().await;
                    return;
                }
            },
            inbound = stream.next() => {
                let text = match inbound {
                    Some(Ok(Message::Text(t))) => t,
                    Some(Ok(Message::Close(_))) | None | Some(Err(_)) => return,
                    Some(Ok(_)) => continue,
                };
                let reply = match parse_client(text.as_str()) {
                    Err(e) => Some(e),
                    Ok(ev) => match (&state.inbox, check_event(&ev, state.layout)) {
                        (None, _) => Some("replay is read-only".to_string()),
                        (_, Err(e)) => Some(e),
                        (Some(inbox), Ok(())) => inbox.send(ev).await.err().map(|_| "service stopping".to_string()),
                    },
                };
                if let Some(msg) = reply {
                    let json = serde_json::to_string(&ServerMessage::error(msg)).expect("messages serialise");
                    if sink.send(Message::Text(json.into())).await.is_err() {
                        return;
                    }
                }
            }
        }
    }
}

/// Inbound events of one tick, latest per target.
#[derive(Debug, Default)]
struct Pending {
    mode: Option<Mode>,
    presses: BTreeMap<(usize, usize), f64>,
    hand: Option<Option<f64>>,
    tare: Option<f64>,
}

impl Pending {
    fn add(&mut self, ev: ClientEvent) {
        match ev {
            ClientEvent::Press { row, col, force } => {
                self.presses.insert((row, col), force);
            }
            ClientEvent::Hand { distance } => self.hand = Some(distance),
            ClientEvent::Mode { mode } => self.mode = Some(mode),
            ClientEvent::Tare { seconds } => self.tare = Some(seconds.unwrap_or(DEFAULT_TARE_S)),
        }
    }
}

struct Live {
    session: Session,
    seq: u64,
    hand: Option<f64>,
    t: f64,
}

impl Live {
    fn apply(&mut self, p: Pending) {
        if let Some(m) = p.mode {
            self.session.set_mode(m);
        }
        for ((r, c), f) in p.presses {
            if let Err(e) = self.session.set_press(r, c, f) {
                eprintln!("press ignored: {e}");
            }
        }
        if let Some(h) = p.hand {
            self.hand = h;
            self.session.set_hand(h);
        }
        if let Some(s) = p.tare {
            if let Err(e) = self.session.tare(s) {
                eprintln!("tare failed: {e}");
            }
        }
    }

    fn next_seq(&mut self) -> u64 {
        self.seq += 1;
        self.seq
    }

    fn frame_message(&mut self, out: StepOutput) -> ServerMessage {
        self.t = out.frame.t;
        let bytes = out.frame.frame.encode().map(|b| hex(&b)).unwrap_or_default();
        let (grid, proximity) = match out.event {
            Some(HostEvent::Tactile(g)) => (Some(g), None),
            Some(HostEvent::Proximity(p)) => (None, Some(p)),
            None => (None, None),
        };
        ServerMessage::Frame {
            v: SCHEMA_VERSION,
            seq: self.next_seq(),
            t: out.frame.t,
            bytes,
            distance: proximity.as_ref().and_then(distance_of),
            grid,
            proximity,
            pose: out.pose,
            fsm: out.fsm,
            command: out.command,
            touch: out.touch,
        }
    }

    fn snapshot(&self) -> ServerMessage {
        let layout = &self.session.model().layout;
        ServerMessage::Snapshot {
            v: SCHEMA_VERSION,
            seq: self.seq,
            t: self.t,
            source: Source::Live,
            mode: self.session.cfg.mode,
            layout: Layout {
                rows: layout.rows,
                cols: layout.cols,
            },
            grid: self.session.host().last_grid().cloned(),
            proximity: self.session.host().last_proximity(),
            pose: self.session.robot().pose(),
            fsm: self.session.fsm().state,
            hand: self.hand,
        }
    }
}

/// Starts the live simulator and its endpoint.
pub async fn start_live(mut cfg: SessionConfig, listen: SocketAddr) -> Result<ServiceHandle, CliError> {
    cfg.record_frames = false;
    cfg.record_trace = false;
    let session = Session::new(cfg)?;
    let layout = Layout {
        rows: session.model().layout.rows,
        cols: session.model().layout.cols,
    };
    let mut live = Live {
        session,
        seq: 0,
        hand: None,
        t: 0.0,
    };
    let (tx, _) = broadcast::channel(SUBSCRIBER_QUEUE);
    let (snap_tx, snap_rx) = watch::channel(Outbound::new(&live.snapshot()));
    let (in_tx, mut in_rx) = mpsc::channel(INBOX);
    let (stop_tx, mut stop_rx) = oneshot::channel();
    let state = AppState {
        tx: tx.clone(),
        snapshot: snap_rx,
        inbox: Some(in_tx),
        layout,
        joined: Arc::new(Notify::new()),
    };
    let (addr, server) = bind(listen, state).await?;

    let driver = tokio::spawn(async move {
        let start = Instant::now();
        let mut tick = tokio::time::interval(TICK);
        tick.set_missed_tick_behavior(MissedTickBehavior::Skip);
        let mut hb = tokio::time::interval(HEARTBEAT);
        hb.set_missed_tick_behavior(MissedTickBehavior::Delay);
        loop {
            tokio::select! {
                _ = &mut stop_rx => return Ok(()),
                _ = hb.tick() => {
                    let seq = live.next_seq();
                    let _ = tx.send(Outbound::new(&ServerMessage::Heartbeat { v: SCHEMA_VERSION, seq, t: live.t }));
                }
                _ = tick.tick() => {
                    let mut pending = Pending::default();
                    while let Ok(ev) = in_rx.try_recv() {
                        pending.add(ev);
                    }
                    live.apply(pending);
                    let now = start.elapsed().as_secs_f64();
                    let mut steps = 0;
                    while live.session.next_time() <= now && steps < MAX_STEPS_PER_TICK {
                        let out = live.session.step()?;
                        let msg = live.frame_message(out);
                        let _ = tx.send(Outbound::new(&msg));
                        steps += 1;
                    }
                    if steps > 0 {
                        let _ = snap_tx.send(Outbound::new(&live.snapshot()));
                    }
                }
            }
        }
    });
    Ok(ServiceHandle {
        addr,
        stop: Some(stop_tx),
        driver,
        server,
    })
}

/// Streams recorded frames at `t / speed`, with host processing and the
/// avoidance state machine re-run on them. The robot does not move.
/// Playback starts when the first client connects.
pub async fn start_replay(
    frames: Vec<TimedFrame>,
    mut host: HostPipeline,
    layout: Layout,
    avoidance: AvoidanceConfig,
    pose: [f64; 3],
    speed: f64,
    listen: SocketAddr,
) -> Result<ServiceHandle, CliError> {
    if !(speed > 0.0 && speed.is_finite()) {
        return Err(CliError::Usage(format!("speed must be positive, got {speed}")));
    }
    let mut seq = 0u64;
    let mut fsm = AvoidanceState::default();
    let snapshot = move |seq, t, host: &HostPipeline, fsm: AvoidanceState| ServerMessage::Snapshot {
        v: SCHEMA_VERSION,
        seq,
        t,
        source: Source::Replay,
        mode: Mode::CollisionAvoid,
        layout,
        grid: host.last_grid().cloned(),
        proximity: host.last_proximity(),
        pose,
        fsm: fsm.state,
        hand: None,
    };
    let (tx, _) = broadcast::channel(SUBSCRIBER_QUEUE);
    let (snap_tx, snap_rx) = watch::channel(Outbound::new(&snapshot(0, 0.0, &host, fsm)));
    let (stop_tx, mut stop_rx) = oneshot::channel();
    let joined = Arc::new(Notify::new());
    let state = AppState {
        tx: tx.clone(),
        snapshot: snap_rx,
        inbox: None,
        layout,
        joined: joined.clone(),
    };
    let (addr, server) = bind(listen, state).await?;

    let driver = tokio::spawn(async move {
        // the clock starts with the first subscriber
        tokio::select! {
            _ = &mut stop_rx => return Ok(()),
            _ = joined.notified() => {}
        }
        let start = Instant::now();
        let mut hb = tokio::time::interval(HEARTBEAT);
        hb.set_missed_tick_behavior(MissedTickBehavior::Delay);
        let mut t = 0.0;
        let mut frames = frames.into_iter().peekable();
        let mut drained: Option<Instant> = None;
        loop {
            let due = frames.peek().map(|f| start + Duration::from_secs_f64(f.t / speed));
            tokio::select! {
                _ = &mut stop_rx => return Ok(()),
                _ = hb.tick() => {
                    seq += 1;
                    let _ = tx.send(Outbound::new(&ServerMessage::Heartbeat { v: SCHEMA_VERSION, seq, t }));
                }
                _ = tokio::time::sleep_until(due.unwrap_or_else(Instant::now)), if due.is_some() => {
                    let Some(tf) = frames.next() else { continue };
                    if frames.peek().is_none() {
                        drained = Some(Instant::now());
                    }
                    t = tf.t;
                    let bytes = tf.frame.encode().map(|b| hex(&b)).unwrap_or_default();
                    let (grid, proximity, mut command) = match host.on_frame(&tf.frame) {
                        Some(HostEvent::Tactile(g)) => (Some(g), None, None),
                        Some(HostEvent::Proximity(p)) => {
                            let (s, cmd) = update_avoidance(p.estimate, fsm, &avoidance);
                            fsm = s;
                            (None, Some(p), cmd)
                        }
                        None => (None, None, None),
                    };
                    seq += 1;
                    let msg = ServerMessage::Frame {
                        v: SCHEMA_VERSION,
                        seq,
                        t,
                        bytes,
                        distance: proximity.as_ref().and_then(distance_of),
                        grid,
                        proximity,
                        pose,
                        fsm: fsm.state,
                        command: command.take(),
                        touch: None,
                    };
                    let _ = tx.send(Outbound::new(&msg));
                    let _ = snap_tx.send(Outbound::new(&snapshot(seq, t, &host, fsm)));
                }
                // everything sent: give subscribers a moment to drain, then stop
                _ = tokio::time::sleep_until(drained.unwrap_or_else(Instant::now) + HEARTBEAT), if due.is_none() => {
                    return Ok(());
                }
            }
        }
    });
    Ok(ServiceHandle {
        addr,
        stop: Some(stop_tx),
        driver,
        server,
    })
}
