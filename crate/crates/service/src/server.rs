use std::net::{Ipv4Addr, SocketAddr};
use std::path::Path;
use std::time::Duration;

use crane_core::config::CraneConfig;
use futures::{SinkExt, StreamExt};
use tokio::net::{TcpListener, TcpStream};
use tokio::sync::{mpsc, oneshot, watch};
use tokio::time::{Instant, MissedTickBehavior};
use tokio_util::bytes::Bytes;
use tokio_util::codec::{Framed, LengthDelimitedCodec};

use crate::log::{LogEntry, SessionLog};
use crate::protocol::{ClientMessage, Command, Reason, ServerMessage, PROTOCOL_VERSION};
use crate::session::Session;
use crate::ServiceError;

/// Simulated seconds between session-log snapshots.
const LOG_SNAPSHOT_PERIOD: f64 = 1.0;
/// Most control ticks run in one wake-up before the clock is allowed to slip.
const MAX_CATCH_UP: usize = 200;

enum Inbound {
    Hello {
        conn: u64,
        client: String,
        token: Option<String>,
        reply: oneshot::Sender<ServerMessage>,
    },
    Command {
        conn: u64,
        seq: u64,
        command: Command,
        reply: oneshot::Sender<ServerMessage>,
    },
    Disconnect {
        conn: u64,
    },
}

pub struct Service {
    listener: TcpListener,
    session: Session,
    log: Option<SessionLog>,
}

impl Service {
    /// Set up the simulated robot and bind `addr`.
    pub async fn bind(cfg: CraneConfig, addr: SocketAddr) -> Result<Self, ServiceError> {
        let log = match &cfg.service.session_log {
            Some(path) => Some(SessionLog::create(Path::new(path)).map_err(ServiceError::Log)?),
            None => None,
        };
        let session = tokio::task::spawn_blocking(move || Session::new(cfg))
            .await
            .map_err(|e| ServiceError::Setup(e.to_string()))??;
        let listener = TcpListener::bind(addr)
            .await
            .map_err(|source| ServiceError::Bind { addr, source })?;
        Ok(Self { listener, session, log })
    }

    pub fn local_addr(&self) -> std::io::Result<SocketAddr> {
        self.listener.local_addr()
    }

    /// Serve until the simulation fails.
    pub async fn run(self) -> Result<(), ServiceError> {
        let Self { listener, session, log } = self;
        let (inbound_tx, inbound_rx) = mpsc::channel(256);
        let (snap_tx, snap_rx) = watch::channel(None::<Bytes>);
        let accept = tokio::spawn(async move {
            let mut next_conn = 0u64;
            loop {
                let Ok((stream, peer)) = listener.accept().await else {
                    continue;
                };
                next_conn += 1;
                tracing::info!(%peer, conn = next_conn, "client connected");
                tokio::spawn(connection(stream, next_conn, inbound_tx.clone(), snap_rx.clone()));
            }
        });
        let result = simulate(session, inbound_rx, snap_tx, log).await;
        accept.abort();
        result
    }
}

/// Run the service on `127.0.0.1:<port>` from the configuration.
pub async fn serve(cfg: CraneConfig) -> Result<(), ServiceError> {
    let addr = SocketAddr::from((Ipv4Addr::LOCALHOST, cfg.service.port));
    let service = Service::bind(cfg, addr).await?;
    tracing::info!(addr = %service.local_addr().map_err(|source| ServiceError::Bind { addr, source })?, "serving");
    service.run().await
}

fn encode(msg: &ServerMessage) -> Bytes {
    Bytes::from(serde_json::to_vec(msg).expect("server messages always serialize"))
}

/// The single owner of the simulation: applies queued messages in arrival
/// order, keeps simulated time in step with the wall clock and publishes the
/// latest snapshot at the broadcast rate.
async fn simulate(
    mut session: Session,
    mut inbound: mpsc::Receiver<Inbound>,
    snapshots: watch::Sender<Option<Bytes>>,
    mut log: Option<SessionLog>,
) -> Result<(), ServiceError> {
    let dt = session.dt();
    let period = 1.0 / session.config().service.broadcast_hz;
    let mut wall_start = Instant::now();
    let mut sim_start = session.time();
    let mut next_broadcast = sim_start;
    let mut next_log = sim_start;
    let mut ticker = tokio::time::interval(Duration::from_millis(1));
    ticker.set_missed_tick_behavior(MissedTickBehavior::Skip);
    loop {
        ticker.tick().await;
        while let Ok(msg) = inbound.try_recv() {
            handle(&mut session, msg, log.as_mut());
        }
        let due = sim_start + wall_start.elapsed().as_secs_f64();
        let mut ran = 0;
        while session.time() + 0.5 * dt < due {
            if ran == MAX_CATCH_UP {
                // Too far behind: let the simulated clock slip rather than sprint.
                wall_start = Instant::now();
                sim_start = session.time();
                break;
            }
            session.tick()?;
            ran += 1;
            if session.time() + 0.5 * dt >= next_broadcast {
                next_broadcast = (next_broadcast + period).max(session.time());
                let snap = session.snapshot();
                if !snap.is_finite() {
                    tracing::error!(time = snap.time, "non-finite state, snapshot withheld");
                    continue;
                }
                if let Some(log) = log.as_mut() {
                    if session.time() + 0.5 * dt >= next_log {
                        next_log += LOG_SNAPSHOT_PERIOD;
                        log.write(&LogEntry::Snapshot(Box::new(snap.clone()))).map_err(ServiceError::Log)?;
                        log.flush().map_err(ServiceError::Log)?;
                    }
                }
                let msg = ServerMessage::Snapshot {
                    v: PROTOCOL_VERSION,
                    state: Box::new(snap),
                };
                snapshots.send_replace(Some(encode(&msg)));
            }
        }
    }
}

fn handle(session: &mut Session, msg: Inbound, log: Option<&mut SessionLog>) {
    match msg {
        Inbound::Hello {
            conn,
            client,
            token,
            reply,
        } => {
            let role = session.hello(conn, &client, token.as_deref());
            let cfg = &session.config().service;
            let _ = reply.send(ServerMessage::Hello {
                v: PROTOCOL_VERSION,
                client,
                role,
                joint_limits: session.limits().ranges.clone(),
                max_target_jump: cfg.max_target_jump,
                heartbeat_timeout: cfg.heartbeat_timeout,
            });
        }
        Inbound::Command {
            conn,
            seq,
            command,
            reply,
        } => {
            let outcome = session.submit(conn, seq, &command);
            if let Some(log) = log {
                let entry = LogEntry::Command {
                    time: session.time(),
                    client: session.client_name(conn).unwrap_or("?").to_owned(),
                    seq,
                    command,
                    rejected: outcome.as_ref().err().map(|r| r.reason),
                };
                if let Err(e) = log.write(&entry) {
                    tracing::warn!(error = %e, "session log write failed");
                }
            }
            let _ = reply.send(match outcome {
                Ok(()) => ServerMessage::ack(seq),
                Err(r) => ServerMessage::error(Some(seq), r.reason, r.message),
            });
        }
        Inbound::Disconnect { conn } => session.disconnect(conn),
    }
}

async fn connection(
    stream: TcpStream,
    conn: u64,
    inbound: mpsc::Sender<Inbound>,
    mut snapshots: watch::Receiver<Option<Bytes>>,
) {
    let mut framed = Framed::new(stream, LengthDelimitedCodec::new());
    let mut greeted = false;
    loop {
        let out = tokio::select! {
            frame = framed.next() => {
                let Some(Ok(frame)) = frame else { break };
                let reply = match serde_json::from_slice::<ClientMessage>(&frame) {
                    Err(e) => ServerMessage::error(None, Reason::Malformed, e.to_string()),
                    Ok(msg) => request(conn, msg, &inbound, &mut greeted).await,
                };
                encode(&reply)
            }
            changed = snapshots.changed(), if greeted => {
                if changed.is_err() {
                    break;
                }
                match snapshots.borrow_and_update().clone() {
                    Some(bytes) => bytes,
                    None => continue,
                }
            }
        };
        if framed.send(out).await.is_err() {
            break;
        }
    }
    let _ = inbound.send(Inbound::Disconnect { conn }).await;
}

async fn request(conn: u64, msg: ClientMessage, inbound: &mpsc::Sender<Inbound>, greeted: &mut bool) -> ServerMessage {
    let v = match &msg {
        ClientMessage::Hello { v, .. } | ClientMessage::Command { v, .. } => *v,
    };
    let seq = match &msg {
        ClientMessage::Command { seq, .. } => Some(*seq),
        ClientMessage::Hello { .. } => None,
    };
    if v != PROTOCOL_VERSION {
        return ServerMessage::error(seq, Reason::Version, format!("protocol version {PROTOCOL_VERSION} expected, got {v}"));
    }
    let (reply, response) = oneshot::channel();
    let forward = match msg {
        ClientMessage::Hello { client, token, .. } => {
            *greeted = true;
            Inbound::Hello {
                conn,
                client,
                token,
                reply,
            }
        }
        ClientMessage::Command { seq, command, .. } => {
            if !*greeted {
                return ServerMessage::error(Some(seq), Reason::NoSession, "send hello first");
            }
            Inbound::Command {
                conn,
                seq,
                command,
                reply,
            }
        }
    };
    if inbound.send(forward).await.is_err() {
        return ServerMessage::error(seq, Reason::NoSession, "simulation stopped");
    }
    response
        .await
        .unwrap_or_else(|_| ServerMessage::error(seq, Reason::NoSession, "simulation stopped"))
}
