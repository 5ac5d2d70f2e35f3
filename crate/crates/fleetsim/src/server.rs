//! HTTP and WebSocket front end of a live session.
//!
//! * `GET /health`
//! * `GET /config`: effective configuration, road geometry and stations
//! * `GET /report`: cumulative metrics of the session so far
//! * `GET /session?hz=<rate>`: WebSocket; the server sends snapshots at the
//!   requested rate (default 10 Hz) and answers every control with an ack
//!
//! Message formats are listed in `docs/protocol.md`.

use std::net::SocketAddr;
use std::time::Duration;

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use futures::{SinkExt, StreamExt};
use serde::{Deserialize, Serialize};
use tokio::net::TcpListener;

use crate::session::{
    Ack, Baselines, ControlMessage, EffectiveConfig, SessionHandle, Snapshot, FLEET_RANGE, SPEED_RANGE_KMH,
};

/// Environment variable holding the bind address, e.g. `0.0.0.0:8080`.
pub const BIND_ENV: &str = "FLEETSIM_BIND";
pub const DEFAULT_BIND: &str = "127.0.0.1:8080";
pub const DEFAULT_HZ: f64 = 10.0;

/// A control as sent by a client; `seq` is echoed in the ack.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientMessage {
    #[serde(default)]
    pub seq: Option<u64>,
    #[serde(flatten)]
    pub control: ControlMessage,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type")]
pub enum ServerMessage {
    Snapshot(Box<Snapshot>),
    Ack(Ack),
    Error { message: String },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NodeView {
    pub id: u32,
    pub x_m: f64,
    pub y_m: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EdgeView {
    pub from: u32,
    pub to: u32,
    pub length_m: f64,
    pub bidirectional: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConfigView {
    pub effective: EffectiveConfig,
    pub fleet_range: (usize, usize),
    pub speed_range_kmh: (f64, f64),
    pub baselines: Baselines,
    pub nodes: Vec<NodeView>,
    pub edges: Vec<EdgeView>,
    pub stations: Vec<(u32, u32)>,
}

pub fn router(handle: SessionHandle) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/config", get(config))
        .route("/report", get(report))
        .route("/session", get(session))
        .with_state(handle)
}

/// Address from [`BIND_ENV`] or the default, with the port replaced when given.
pub fn bind_address(port: Option<u16>) -> Result<SocketAddr, std::net::AddrParseError> {
    let mut addr: SocketAddr = std::env::var(BIND_ENV).unwrap_or_else(|_| DEFAULT_BIND.into()).parse()?;
    if let Some(p) = port {
        addr.set_port(p);
    }
    Ok(addr)
}

pub async fn serve(listener: TcpListener, handle: SessionHandle) -> std::io::Result<()> {
    tracing::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(handle)).await
}

fn unavailable() -> Response {
    (StatusCode::SERVICE_UNAVAILABLE, "session closed").into_response()
}

async fn health(State(h): State<SessionHandle>) -> Response {
    let s = h.latest();
    Json(serde_json::json!({ "status": "ok", "sim_clock_s": s.sim_clock_s })).into_response()
}

async fn config(State(h): State<SessionHandle>) -> Response {
    let Ok(effective) = h.effective().await else { return unavailable() };
    let inputs = h.inputs();
    let net = &inputs.network;
    Json(ConfigView {
        effective,
        fleet_range: FLEET_RANGE,
        speed_range_kmh: SPEED_RANGE_KMH,
        baselines: Baselines::default(),
        nodes: net.nodes().iter().map(|n| NodeView { id: n.id.0, x_m: n.x_m, y_m: n.y_m }).collect(),
        edges: net
            .edges()
            .iter()
            .map(|e| EdgeView { from: e.from.0, to: e.to.0, length_m: e.length_m, bidirectional: e.bidirectional })
            .collect(),
        stations: inputs.stations.iter().map(|s| (s.id.0, s.node.0)).collect(),
    })
    .into_response()
}

async fn report(State(h): State<SessionHandle>) -> Response {
    match h.report().await {
        Ok(r) => Json(r).into_response(),
        Err(_) => unavailable(),
    }
}

#[derive(Debug, Deserialize)]
struct SessionQuery {
    hz: Option<f64>,
}

async fn session(ws: WebSocketUpgrade, Query(q): Query<SessionQuery>, State(h): State<SessionHandle>) -> Response {
    let hz = q.hz.filter(|v| v.is_finite() && *v > 0.0).unwrap_or(DEFAULT_HZ).min(1000.0);
    ws.on_upgrade(move |socket| client(socket, h, hz))
}

fn encode(msg: &ServerMessage) -> Message {
    Message::Text(serde_json::to_string(msg).expect("server messages serialize").into())
}

async fn client(socket: WebSocket, h: SessionHandle, hz: f64) {
    let (mut tx, mut rx) = socket.split();
    let snapshots = h.subscribe();
    let mut every = tokio::time::interval(Duration::from_secs_f64(1.0 / hz));
    every.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Skip);
    loop {
        tokio::select! {
            _ = every.tick() => {
                let snap = snapshots.borrow().clone();
                if tx.send(encode(&ServerMessage::Snapshot(Box::new((*snap).clone())))).await.is_err() {
                    return;
                }
            }
            incoming = rx.next() => {
                let text = match incoming {
                    Some(Ok(Message::Text(t))) => t,
                    Some(Ok(Message::Close(_))) | None | Some(Err(_)) => return,
                    Some(Ok(_)) => continue,
                };
                let reply = match serde_json::from_str::<ClientMessage>(&text) {
                    Ok(m) => match h.control(m.control, m.seq).await {
                        Ok(Ok(ack)) => ServerMessage::Ack(ack),
                        Ok(Err(message)) => ServerMessage::Error { message },
                        Err(_) => return,
                    },
                    Err(e) => ServerMessage::Error { message: format!("bad control message: {e}") },
                };
                if tx.send(encode(&reply)).await.is_err() {
                    return;
                }
            }
        }
    }
}
