//! HTTP and WebSocket front end.
//!
//! - `POST /sessions` creates a session and returns its id and token.
//! - `GET /sessions/{id}?token=…` returns the session snapshot.
//! - `GET /sessions/{id}/ws?token=…` opens the message socket.
//! - `GET /export[?condition=…]` returns the dataset as JSON Lines.

use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures::{SinkExt, StreamExt};
use serde::Deserialize;
use serde_json::json;
use tokio::sync::broadcast::error::RecvError;

use crate::event::Command;
use crate::manager::{CreateRequest, ManagerError, SessionManager};
use crate::wire::{Body, WireMessage};

type AppState = Arc<SessionManager>;

impl IntoResponse for ManagerError {
    fn into_response(self) -> Response {
        let status = match &self {
            ManagerError::UnknownSession(_) => StatusCode::NOT_FOUND,
            ManagerError::Unauthorized => StatusCode::UNAUTHORIZED,
            ManagerError::Condition(_) | ManagerError::BadRequest(_) | ManagerError::Engine(_) => {
                StatusCode::BAD_REQUEST
            }
            ManagerError::Store(_) | ManagerError::Replay { .. } => StatusCode::INTERNAL_SERVER_ERROR,
        };
        (status, Json(json!({ "error": self.to_string() }))).into_response()
    }
}

pub fn router(manager: AppState, static_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/health", get(|| async { "ok" }))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/ws", get(open_socket))
        .route("/export", get(export))
        .with_state(manager);
    match static_dir {
        Some(dir) => api.fallback_service(tower_http::services::ServeDir::new(dir)),
        None => api,
    }
}

/// Closes timed-out games every `period` until the runtime shuts down.
pub fn spawn_ticker(manager: AppState, period: Duration) -> tokio::task::JoinHandle<()> {
    tokio::spawn(async move {
        let mut interval = tokio::time::interval(period);
        loop {
            interval.tick().await;
            let m = manager.clone();
            if let Err(e) = tokio::task::spawn_blocking(move || m.tick_all()).await {
                log::error!("ticker task failed: {e}");
            }
        }
    })
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> T + Send + 'static) -> T {
    tokio::task::spawn_blocking(f).await.expect("blocking task panicked")
}

async fn create_session(State(m): State<AppState>, body: Option<Json<CreateRequest>>) -> Response {
    let req = body.map(|Json(r)| r).unwrap_or_default();
    match blocking(move || m.create_session(&req)).await {
        Ok(created) => (StatusCode::CREATED, Json(created)).into_response(),
        Err(e) => e.into_response(),
    }
}

#[derive(Debug, Deserialize)]
struct TokenQuery {
    #[serde(default)]
    token: String,
}

async fn get_session(State(m): State<AppState>, Path(id): Path<String>, Query(q): Query<TokenQuery>) -> Response {
    match m.authorize(&id, &q.token).and_then(|_| m.session(&id)) {
        Ok(s) => Json(s).into_response(),
        Err(e) => e.into_response(),
    }
}

#[derive(Debug, Deserialize)]
struct ExportQuery {
    condition: Option<String>,
}

async fn export(State(m): State<AppState>, Query(q): Query<ExportQuery>) -> Response {
    let body = blocking(move || m.export(q.condition.as_deref())).await;
    ([(header::CONTENT_TYPE, "application/x-ndjson")], body).into_response()
}

async fn open_socket(
    State(m): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<TokenQuery>,
    ws: WebSocketUpgrade,
) -> Response {
    if let Err(e) = m.authorize(&id, &q.token) {
        return e.into_response();
    }
    ws.on_upgrade(move |socket| serve_socket(m, id, socket))
}

fn to_text(m: &WireMessage) -> Message {
    Message::Text(serde_json::to_string(m).expect("wire messages serialize").into())
}

/// Converts a client message into a logged command; `None` for join.
fn command_for(body: Body) -> Option<Command> {
    Some(match body {
        Body::ChatSend(c) => Command::Chat { text: c.text },
        Body::Move(mv) => Command::Move { step: mv.step },
        Body::QuestionnaireSubmit(q) => Command::Questionnaire { responses: q },
        Body::Join(_) => return None,
        other => Command::Invalid { message: format!("{} is a server message", other.type_name()) },
    })
}

enum SocketEvent {
    Incoming(Option<Result<Message, axum::Error>>),
    Live(Result<WireMessage, RecvError>),
}

async fn serve_socket(m: AppState, id: String, socket: WebSocket) {
    let (mut sink, mut stream) = socket.split();
    let mut last_sent = 0;
    let mut rx: Option<tokio::sync::broadcast::Receiver<WireMessage>> = None;
    loop {
        let event = {
            let live = async {
                match rx.as_mut() {
                    Some(r) => r.recv().await,
                    None => std::future::pending().await,
                }
            };
            tokio::select! {
                incoming = stream.next() => SocketEvent::Incoming(incoming),
                msg = live => SocketEvent::Live(msg),
            }
        };
        let outgoing = match event {
            SocketEvent::Incoming(incoming) => {
                let text = match incoming {
                    Some(Ok(Message::Text(t))) => t.to_string(),
                    Some(Ok(Message::Close(_))) | None | Some(Err(_)) => break,
                    Some(Ok(_)) => continue,
                };
                match serde_json::from_str::<WireMessage>(&text) {
                    Ok(WireMessage { session_id, body: Body::Join(join), .. }) if session_id == id => {
                        let (m2, id2) = (m.clone(), id.clone());
                        match blocking(move || m2.subscribe(&id2, join.last_seq)).await {
                            Ok((backlog, r)) => {
                                last_sent = join.last_seq;
                                rx = Some(r);
                                backlog
                            }
                            Err(e) => {
                                log::warn!("join on {id} failed: {e}");
                                break;
                            }
                        }
                    }
                    parsed => {
                        let (client_seq, command) = match parsed {
                            Ok(msg) if msg.session_id != id => (
                                0,
                                Some(Command::Invalid {
                                    message: format!("session id {} on the socket for {id}", msg.session_id),
                                }),
                            ),
                            Ok(msg) => (msg.seq, command_for(msg.body)),
                            Err(e) => (0, Some(Command::Invalid { message: e.to_string() })),
                        };
                        if let Some(command) = command {
                            let (m2, id2) = (m.clone(), id.clone());
                            if let Err(e) = blocking(move || m2.command(&id2, client_seq, command)).await {
                                log::error!("command on {id} failed: {e}");
                                break;
                            }
                        }
                        // Results arrive through the subscription.
                        Vec::new()
                    }
                }
            }
            SocketEvent::Live(Ok(msg)) => vec![msg],
            SocketEvent::Live(Err(RecvError::Lagged(_))) => {
                let (m2, id2) = (m.clone(), id.clone());
                match blocking(move || m2.messages_since(&id2, last_sent)).await {
                    Ok(v) => v,
                    Err(_) => break,
                }
            }
            SocketEvent::Live(Err(RecvError::Closed)) => break,
        };
        for msg in outgoing {
            if msg.seq <= last_sent {
                continue;
            }
            last_sent = msg.seq;
            if sink.send(to_text(&msg)).await.is_err() {
                return;
            }
        }
    }
}
