//! JSON-over-HTTP endpoints and the per-session WebSocket stream.

use axum::extract::ws::rejection::WebSocketUpgradeRejection;
use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::{Json, Router};
use rekindle_core::{DocumentUpdate, InteractionEvent, Millis, SessionId};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::ServiceError;
use crate::messages::{
    Ack, ClientMessage, CreateSessionRequest, CreateSessionResponse, DocumentBody, ServerMessage,
    ThresholdRequest,
};
use crate::service::{Service, StreamHandle};

pub fn router(service: Service) -> Router {
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", axum::routing::delete(end_session))
        .route("/sessions/{id}/events", post(ingest_events))
        .route("/sessions/{id}/document", put(update_document))
        .route("/sessions/{id}/threshold", put(set_threshold))
        .route("/sessions/{id}/stream", get(stream))
        .route("/clock/advance", post(advance_clock))
        .with_state(service)
}

impl ServiceError {
    fn status(&self) -> StatusCode {
        match self {
            ServiceError::UnknownSession(_) => StatusCode::NOT_FOUND,
            ServiceError::OutOfOrder(_) | ServiceError::VirtualClockRequired => {
                StatusCode::CONFLICT
            }
            ServiceError::SessionMismatch { .. }
            | ServiceError::Config(_)
            | ServiceError::InvalidEvent(_)
            | ServiceError::MalformedDocument(_)
            | ServiceError::Document(_) => StatusCode::UNPROCESSABLE_ENTITY,
            ServiceError::Io(_) | ServiceError::Log(_) | ServiceError::Metrics(_) => {
                StatusCode::INTERNAL_SERVER_ERROR
            }
        }
    }
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let status = self.status();
        if status.is_server_error() {
            tracing::error!(err = %self, "request failed");
        }
        (
            status,
            Json(json!({"code": self.code(), "message": self.to_string()})),
        )
            .into_response()
    }
}

async fn create_session(
    State(service): State<Service>,
    Json(req): Json<CreateSessionRequest>,
) -> Result<(StatusCode, Json<CreateSessionResponse>), ServiceError> {
    let session_id = service.create_session(req.config, req.doc_kind, req.recipient)?;
    Ok((StatusCode::CREATED, Json(CreateSessionResponse { session_id })))
}

/// Batch fallback for clients without a stream. Events are applied in order;
/// the first rejection stops the batch.
async fn ingest_events(
    State(service): State<Service>,
    Path(id): Path<String>,
    Json(events): Json<Vec<InteractionEvent>>,
) -> Result<Json<Vec<Ack>>, ServiceError> {
    let id = SessionId::new(id);
    let acks = events
        .into_iter()
        .map(|ev| service.ingest_event(&id, ev))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Json(acks))
}

async fn update_document(
    State(service): State<Service>,
    Path(id): Path<String>,
    body: axum::body::Bytes,
) -> Result<Json<Ack>, ServiceError> {
    let body: DocumentBody = serde_json::from_slice(&body)
        .map_err(|e| ServiceError::MalformedDocument(e.to_string()))?;
    let update: DocumentUpdate = body.into();
    Ok(Json(service.update_document(&SessionId::new(id), update)?))
}

async fn set_threshold(
    State(service): State<Service>,
    Path(id): Path<String>,
    Json(req): Json<ThresholdRequest>,
) -> Result<Json<Ack>, ServiceError> {
    Ok(Json(
        service.set_threshold(&SessionId::new(id), req.idle_threshold_t)?,
    ))
}

async fn end_session(
    State(service): State<Service>,
    Path(id): Path<String>,
) -> Result<Json<rekindle_core::MetricsReport>, ServiceError> {
    Ok(Json(service.end_session(&SessionId::new(id))?))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct AdvanceRequest {
    pub by_ms: Millis,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct AdvanceResponse {
    pub now_ms: Millis,
}

async fn advance_clock(
    State(service): State<Service>,
    Json(req): Json<AdvanceRequest>,
) -> Result<Json<AdvanceResponse>, ServiceError> {
    let now_ms = service.advance_clock(req.by_ms)?;
    Ok(Json(AdvanceResponse { now_ms }))
}

async fn stream(
    State(service): State<Service>,
    Path(id): Path<String>,
    ws: Result<WebSocketUpgrade, WebSocketUpgradeRejection>,
) -> Result<Response, ServiceError> {
    let id = SessionId::new(id);
    service.config(&id)?;
    let ws = match ws {
        Ok(ws) => ws,
        Err(rejection) => return Ok(rejection.into_response()),
    };
    let handle = service.connect(&id)?;
    Ok(ws.on_upgrade(move |socket| run_stream(service, id, handle, socket)))
}

async fn send(socket: &mut WebSocket, msg: &ServerMessage) -> bool {
    match serde_json::to_string(msg) {
        Ok(text) => socket.send(Message::Text(text.into())).await.is_ok(),
        Err(_) => false,
    }
}

/// Pumps server messages out and client events in. Each inbound event is
/// processed before the next frame is read, so a slow session slows the
/// client instead of dropping events.
async fn run_stream(service: Service, id: SessionId, mut handle: StreamHandle, mut socket: WebSocket) {
    loop {
        tokio::select! {
            outbound = handle.recv() => match outbound {
                Some(msg) => if !send(&mut socket, &msg).await { break },
                None => break,
            },
            inbound = socket.recv() => {
                let text = match inbound {
                    Some(Ok(Message::Text(text))) => text,
                    Some(Ok(Message::Close(_))) | None | Some(Err(_)) => break,
                    Some(Ok(_)) => continue,
                };
                let reply = match serde_json::from_str::<ClientMessage>(&text) {
                    Ok(ClientMessage::Event(ev)) => {
                        let service = service.clone();
                        let id = id.clone();
                        match tokio::task::spawn_blocking(move || service.ingest_event(&id, ev)).await {
                            Ok(Ok(ack)) => ServerMessage::Ack(ack),
                            Ok(Err(err)) => ServerMessage::Error {
                                code: err.code().into(),
                                message: err.to_string(),
                            },
                            Err(join) => ServerMessage::Error {
                                code: "internal".into(),
                                message: join.to_string(),
                            },
                        }
                    }
                    Err(err) => ServerMessage::Error {
                        code: "malformed_message".into(),
                        message: err.to_string(),
                    },
                };
                if !send(&mut socket, &reply).await {
                    break;
                }
            }
        }
    }
    tracing::debug!(session = %id, "stream closed");
}
