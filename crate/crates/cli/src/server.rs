//! WebSocket session gateway.
//!
//! Each connection owns at most one live session. The session runs in its
//! own task on a fixed tick; the connection task only parses messages and
//! forwards commands to it over a channel.

use std::net::SocketAddr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Duration;

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::IntoResponse;
use axum::routing::get;
use axum::serve::ListenerExt;
use axum::Router;
use futures_util::{SinkExt, StreamExt};
use shared_dof_core::control::{InputFrame, InputSource, Session};
use shared_dof_core::protocol::{
    parse_client, ClientMessage, ErrorCode, ServerMessage, SessionDescriptor, StateMessage, PROTOCOL_VERSION,
    SUBPROTOCOL,
};
use shared_dof_core::telemetry::{MetricsAccumulator, TickRecord};
use tokio::net::TcpListener;
use tokio::sync::mpsc;
use tokio::time::MissedTickBehavior;

pub const DEFAULT_IDLE_TIMEOUT: Duration = Duration::from_secs(600);

#[derive(Debug, Clone, Copy)]
pub struct ServeOptions {
    pub tick_rate_hz: f64,
    /// Connections with no client message for this long are closed.
    pub idle_timeout: Duration,
}

impl Default for ServeOptions {
    fn default() -> Self {
        ServeOptions {
            tick_rate_hz: 20.0,
            idle_timeout: DEFAULT_IDLE_TIMEOUT,
        }
    }
}

impl ServeOptions {
    pub fn tick_period(&self) -> Duration {
        Duration::from_secs_f64(1.0 / self.tick_rate_hz)
    }
}

struct AppState {
    next_session: AtomicU64,
    options: ServeOptions,
}

pub fn router(options: ServeOptions) -> Router {
    let state = Arc::new(AppState {
        next_session: AtomicU64::new(1),
        options,
    });
    Router::new().route("/session", get(upgrade)).with_state(state)
}

/// Serve until the listener fails.
pub async fn serve(listener: TcpListener, options: ServeOptions) -> std::io::Result<()> {
    if !(options.tick_rate_hz.is_finite() && options.tick_rate_hz > 0.0) {
        return Err(std::io::Error::new(
            std::io::ErrorKind::InvalidInput,
            "tick rate must be a positive number",
        ));
    }
    // Input frames are tiny and latency bound.
    let listener = listener.tap_io(|tcp| {
        let _ = tcp.set_nodelay(true);
    });
    axum::serve(listener, router(options)).await
}

pub async fn bind(addr: SocketAddr) -> std::io::Result<TcpListener> {
    TcpListener::bind(addr).await
}

async fn upgrade(ws: WebSocketUpgrade, State(app): State<Arc<AppState>>) -> impl IntoResponse {
    ws.protocols([SUBPROTOCOL])
        .on_upgrade(move |socket| connection(socket, app))
}

enum Outgoing {
    Msg(Box<ServerMessage>),
    Close,
}

impl Outgoing {
    fn msg(m: ServerMessage) -> Self {
        Outgoing::Msg(Box::new(m))
    }
}

type OutTx = mpsc::UnboundedSender<Outgoing>;

enum SessionCmd {
    Input(InputFrame),
    Perspective,
    Pause,
    Resume,
}

struct LiveSession {
    id: String,
    cmds: mpsc::UnboundedSender<SessionCmd>,
}

async fn connection(socket: WebSocket, app: Arc<AppState>) {
    let (mut sink, mut stream) = socket.split();
    let (out_tx, mut out_rx) = mpsc::unbounded_channel::<Outgoing>();

    let writer = tokio::spawn(async move {
        while let Some(o) = out_rx.recv().await {
            match o {
                Outgoing::Msg(m) => {
                    if sink.send(Message::Text(m.to_json().into())).await.is_err() {
                        break;
                    }
                }
                Outgoing::Close => {
                    let _ = sink.send(Message::Close(None)).await;
                    break;
                }
            }
        }
    });

    let mut greeted = false;
    let mut live: Option<LiveSession> = None;
    loop {
        let next = tokio::time::timeout(app.options.idle_timeout, stream.next()).await;
        let msg = match next {
            Err(_) => {
                let _ = out_tx.send(Outgoing::msg(ServerMessage::Bye {
                    session_id: live.as_ref().map(|l| l.id.clone()),
                    reason: "idle".into(),
                }));
                break;
            }
            Ok(None) | Ok(Some(Err(_))) => break,
            Ok(Some(Ok(m))) => m,
        };
        let text = match msg {
            Message::Text(t) => t,
            Message::Close(_) => break,
            Message::Ping(_) | Message::Pong(_) => continue,
            Message::Binary(_) => {
                send_error(&out_tx, None, ErrorCode::Protocol, "binary frames are not supported");
                break;
            }
        };
        // A finished session loop drops its receiver.
        if live.as_ref().is_some_and(|l| l.cmds.is_closed()) {
            live = None;
        }
        let parsed = match parse_client(text.as_str()) {
            Ok(m) => m,
            Err(e) => {
                let sid = live.as_ref().map(|l| l.id.as_str());
                send_error(&out_tx, sid, e.code(), e.to_string());
                if e.code() == ErrorCode::Protocol {
                    break;
                }
                continue;
            }
        };
        if !greeted {
            match parsed {
                ClientMessage::Hello { protocol_version } if protocol_version == PROTOCOL_VERSION => {
                    greeted = true;
                    let _ = out_tx.send(Outgoing::msg(ServerMessage::Hello {
                        protocol_version: PROTOCOL_VERSION,
                    }));
                }
                ClientMessage::Hello { protocol_version } => {
                    send_error(
                        &out_tx,
                        None,
                        ErrorCode::Version,
                        format!("unsupported protocol version {protocol_version}, server speaks {PROTOCOL_VERSION}"),
                    );
                    break;
                }
                _ => {
                    send_error(&out_tx, None, ErrorCode::Protocol, "expected hello first");
                    break;
                }
            }
            continue;
        }
        match handle(parsed, &mut live, &app, &out_tx) {
            Flow::Continue => {}
            Flow::Close => break,
        }
    }

    drop(live);
    let _ = out_tx.send(Outgoing::Close);
    let _ = writer.await;
}

enum Flow {
    Continue,
    Close,
}

fn send_error(out: &OutTx, session_id: Option<&str>, code: ErrorCode, message: impl Into<String>) {
    let _ = out.send(Outgoing::msg(ServerMessage::error(session_id, code, message)));
}

fn handle(msg: ClientMessage, live: &mut Option<LiveSession>, app: &AppState, out: &OutTx) -> Flow {
    let target = |sid: &Option<String>| -> Result<&LiveSession, (ErrorCode, String)> {
        let l = live
            .as_ref()
            .ok_or((ErrorCode::NoSession, "no session; send create_session first".to_string()))?;
        match sid {
            Some(s) if *s != l.id => Err((ErrorCode::NoSession, format!("unknown session {s:?}"))),
            _ => Ok(l),
        }
    };
    let cmd = match msg {
        ClientMessage::Hello { .. } => {
            send_error(out, None, ErrorCode::Protocol, "duplicate hello");
            return Flow::Close;
        }
        ClientMessage::CreateSession { scenario, config } => {
            if let Some(l) = live.as_ref() {
                send_error(out, Some(&l.id), ErrorCode::InvalidSession, "a session is already running");
                return Flow::Continue;
            }
            let session = scenario
                .resolve()
                .map_err(|e| e.to_string())
                .and_then(|s| Session::new(s, config).map_err(|e| e.to_string()));
            match session {
                Ok(session) => *live = Some(start_session(session, app, out.clone())),
                Err(e) => send_error(out, None, ErrorCode::InvalidSession, e),
            }
            return Flow::Continue;
        }
        ClientMessage::Input {
            session_id,
            axes,
            buttons,
        } => {
            let frame = InputFrame {
                axes,
                buttons,
                source: InputSource::Human,
            };
            if let Err(e) = frame.validate() {
                send_error(out, live.as_ref().map(|l| l.id.as_str()), ErrorCode::InvalidInput, e.to_string());
                return Flow::Continue;
            }
            (session_id, SessionCmd::Input(frame))
        }
        ClientMessage::PerspectiveRequest { session_id } => (session_id, SessionCmd::Perspective),
        ClientMessage::Pause { session_id } => (session_id, SessionCmd::Pause),
        ClientMessage::Resume { session_id } => (session_id, SessionCmd::Resume),
    };
    match target(&cmd.0) {
        Ok(l) => {
            let _ = l.cmds.send(cmd.1);
        }
        Err((code, message)) => send_error(out, live.as_ref().map(|l| l.id.as_str()), code, message),
    }
    Flow::Continue
}

fn start_session(session: Session, app: &AppState, out: OutTx) -> LiveSession {
    let id = format!("s{}", app.next_session.fetch_add(1, Ordering::Relaxed));
    let descriptor = SessionDescriptor {
        session_id: id.clone(),
        scenario: session.scenario.name.clone(),
        config: session.config,
        tick_rate_hz: app.options.tick_rate_hz,
    };
    let _ = out.send(Outgoing::msg(ServerMessage::SessionCreated {
        session_id: id.clone(),
        descriptor,
    }));
    let (tx, rx) = mpsc::unbounded_channel();
    tokio::spawn(session_loop(id.clone(), session, rx, out, app.options.tick_period()));
    LiveSession { id, cmds: tx }
}

async fn session_loop(
    id: String,
    mut session: Session,
    mut cmds: mpsc::UnboundedReceiver<SessionCmd>,
    out: OutTx,
    period: Duration,
) {
    let dt = session.dt();
    let mut metrics = MetricsAccumulator::with_start(dt, &session.state.gripper);
    let mut pending: Option<InputFrame> = None;
    let mut perspective = false;
    let mut paused = false;
    let state = |s: &Session, m: &MetricsAccumulator, paused: bool| {
        Outgoing::msg(ServerMessage::State(Box::new(StateMessage::capture(&id, s, m.metrics(), paused))))
    };
    if out.send(state(&session, &metrics, paused)).is_err() {
        return;
    }

    let mut ticker = tokio::time::interval(period);
    ticker.set_missed_tick_behavior(MissedTickBehavior::Delay);
    ticker.tick().await;
    loop {
        tokio::select! {
            cmd = cmds.recv() => match cmd {
                None => return,
                Some(SessionCmd::Input(f)) => {
                    pending = Some(match pending {
                        Some(p) => p.coalesce(f),
                        None => f,
                    });
                }
                Some(SessionCmd::Perspective) => perspective = true,
                Some(SessionCmd::Pause) => {
                    paused = true;
                    let _ = out.send(state(&session, &metrics, paused));
                }
                Some(SessionCmd::Resume) => {
                    paused = false;
                    let _ = out.send(state(&session, &metrics, paused));
                }
            },
            _ = ticker.tick() => {
                if paused {
                    continue;
                }
                let tick = session.state.tick;
                let mut events = if std::mem::take(&mut perspective) {
                    session.request_perspective_change()
                } else {
                    Vec::new()
                };
                // No frame during the period means the stick is released.
                let input = pending.take().unwrap_or_default();
                match session.advance(&input) {
                    Ok(mut ev) => events.append(&mut ev),
                    Err(e) => {
                        send_error(&out, Some(&id), ErrorCode::InvalidInput, e.to_string());
                        continue;
                    }
                }
                let record = TickRecord::capture(tick, &session.state, events, dt);
                metrics.push(&record);
                for event in record.events {
                    let _ = out.send(Outgoing::msg(ServerMessage::Event {
                        session_id: id.clone(),
                        tick,
                        event,
                    }));
                }
                if out.send(state(&session, &metrics, paused)).is_err() {
                    return;
                }
                if session.state.is_done() {
                    let _ = out.send(Outgoing::msg(ServerMessage::Bye {
                        session_id: Some(id.clone()),
                        reason: "done".into(),
                    }));
                    return;
                }
            }
        }
    }
}
