//! HTTP/JSON front end.

use std::convert::Infallible;
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{HeaderMap, StatusCode};
use axum::response::sse::{Event as SseEvent, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{delete, get, post};
use axum::{Json, Router};
use futures::stream::{self, Stream, StreamExt};
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::{json, Value};
use tokio::sync::broadcast;

use sempubsub_core::{Notification, ParseError};

use crate::client::Transport;
use crate::config::Mode;
use crate::engine::Broker;
use crate::error::BrokerError;

impl IntoResponse for BrokerError {
    fn into_response(self) -> Response {
        let status = match &self {
            BrokerError::UnknownClient(_) | BrokerError::UnknownSubscription(_) => StatusCode::NOT_FOUND,
            BrokerError::DuplicateClient(_) | BrokerError::DuplicateSubscription(_) => StatusCode::CONFLICT,
            BrokerError::Parse(_) | BrokerError::InvalidRequest(_) => StatusCode::BAD_REQUEST,
            BrokerError::Unauthorized => StatusCode::UNAUTHORIZED,
            BrokerError::Storage(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        (status, Json(json!({ "error": self.to_string() }))).into_response()
    }
}

type ApiResult<T> = Result<T, BrokerError>;

pub fn router(broker: Broker) -> Router {
    Router::new()
        .route("/clients", post(register_client))
        .route("/subscriptions", post(subscribe))
        .route("/subscriptions/{sub_id}", delete(unsubscribe))
        .route("/publications", post(publish))
        .route("/notifications", get(drain))
        .route("/stream", get(stream))
        .route("/status", get(status))
        .route("/admin/mode", post(set_mode))
        .route("/admin/dead-letters", get(dead_letters))
        .with_state(broker)
}

/// Serves until the listener fails or the task is dropped.
pub async fn serve(listener: tokio::net::TcpListener, broker: Broker) -> std::io::Result<()> {
    axum::serve(listener, router(broker)).await
}

// Bodies are parsed by hand so every rejection has the same JSON shape.
fn body<T: DeserializeOwned>(bytes: &Bytes) -> ApiResult<T> {
    serde_json::from_slice(bytes).map_err(|e| match e.classify() {
        serde_json::error::Category::Data => BrokerError::InvalidRequest(e.to_string()),
        _ => BrokerError::Parse(ParseError::from(e)),
    })
}

fn admin_token(headers: &HeaderMap) -> Option<&str> {
    if let Some(v) = headers.get("x-admin-token") {
        return v.to_str().ok();
    }
    headers.get("authorization")?.to_str().ok()?.strip_prefix("Bearer ")
}

#[derive(Deserialize)]
struct NewClient {
    #[serde(default)]
    client_id: Option<String>,
    name: String,
    transport: Value,
}

async fn register_client(State(b): State<Broker>, bytes: Bytes) -> ApiResult<impl IntoResponse> {
    let req: NewClient = body(&bytes)?;
    let transport: Transport =
        serde_json::from_value(req.transport).map_err(|e| BrokerError::InvalidRequest(format!("transport: {e}")))?;
    let record = b.register_client(req.client_id, req.name, transport)?;
    Ok((StatusCode::CREATED, Json(record)))
}

#[derive(Deserialize)]
struct PublishDoc {
    client_id: String,
    event: Value,
}

#[derive(Deserialize)]
struct SubscribeDoc {
    client_id: String,
    subscription: Value,
}

async fn subscribe(State(b): State<Broker>, bytes: Bytes) -> ApiResult<impl IntoResponse> {
    let req: SubscribeDoc = body(&bytes)?;
    let sub_id = b.subscribe(&req.client_id, &req.subscription)?;
    Ok((StatusCode::CREATED, Json(json!({ "sub_id": sub_id }))))
}

async fn unsubscribe(State(b): State<Broker>, Path(sub_id): Path<String>) -> ApiResult<StatusCode> {
    b.unsubscribe(&sub_id)?;
    Ok(StatusCode::NO_CONTENT)
}

async fn publish(State(b): State<Broker>, bytes: Bytes) -> ApiResult<impl IntoResponse> {
    let req: PublishDoc = body(&bytes)?;
    Ok(Json(b.publish(&req.client_id, &req.event)?))
}

#[derive(Deserialize)]
struct ClientQuery {
    client_id: String,
}

async fn drain(State(b): State<Broker>, Query(q): Query<ClientQuery>) -> ApiResult<Json<Vec<Notification>>> {
    Ok(Json(b.drain(&q.client_id)?))
}

fn sse_event(n: &Notification) -> SseEvent {
    SseEvent::default()
        .event("notification")
        .id(n.dedupe_key.clone())
        .json_data(n)
        .expect("notifications serialize")
}

async fn stream(
    State(b): State<Broker>,
    Query(q): Query<ClientQuery>,
) -> ApiResult<Sse<impl Stream<Item = Result<SseEvent, Infallible>>>> {
    let (backlog, rx) = b.open_stream(&q.client_id)?;
    let backlog = stream::iter(backlog.iter().map(sse_event).map(Ok).collect::<Vec<_>>());
    let live = stream::unfold(rx, |mut rx| async move {
        loop {
            match rx.recv().await {
                Ok(n) => return Some((Ok(sse_event(&n)), rx)),
                Err(broadcast::error::RecvError::Lagged(missed)) => {
                    log::warn!("stream consumer lagged, {missed} notifications dropped");
                }
                Err(broadcast::error::RecvError::Closed) => return None,
            }
        }
    });
    Ok(Sse::new(backlog.chain(live)).keep_alive(KeepAlive::new().interval(Duration::from_secs(15))))
}

async fn status(State(b): State<Broker>) -> impl IntoResponse {
    Json(b.status())
}

#[derive(Deserialize)]
struct ModeDoc {
    mode: String,
}

async fn set_mode(State(b): State<Broker>, headers: HeaderMap, bytes: Bytes) -> ApiResult<impl IntoResponse> {
    b.check_admin(admin_token(&headers))?;
    let req: ModeDoc = body(&bytes)?;
    let mode: Mode = req.mode.parse().map_err(BrokerError::InvalidRequest)?;
    b.set_mode(mode);
    Ok(Json(json!({ "mode": mode })))
}

async fn dead_letters(State(b): State<Broker>, headers: HeaderMap) -> ApiResult<impl IntoResponse> {
    b.check_admin(admin_token(&headers))?;
    Ok(Json(b.dead_letters()))
}
