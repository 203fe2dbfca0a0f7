//! HTTP and WebSocket surface of the hub.

use std::collections::BTreeSet;
use std::net::{IpAddr, SocketAddr};
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{ConnectInfo, Path, Query, Request, State};
use axum::http::{header, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{delete, get, post};
use axum::{Json, Router};
use hub_core::error::{HubError, StoreError};
use hub_core::model::{Action, EntryKind, ParticipantAction, PolicyConfig, Violation};
use hub_core::net::peer_allowed;
use hub_core::store::TimelineQuery;
use hub_core::wire::LiveEvent;
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::json;
use tokio::sync::broadcast::error::RecvError;

use crate::runtime::Shared;

/// Actor recorded when a request names none.
pub const DEFAULT_ACTOR: &str = "canvas";

#[derive(Debug)]
pub enum ApiError {
    BadRequest(String),
    NotFound(String),
    NotArmed,
    Invalid(Vec<Violation>),
    Forbidden,
    Internal(String),
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, body) = match self {
            ApiError::BadRequest(m) => (StatusCode::BAD_REQUEST, json!({ "error": m })),
            ApiError::NotFound(m) => (StatusCode::NOT_FOUND, json!({ "error": m })),
            ApiError::NotArmed => (StatusCode::CONFLICT, json!({ "error": "control not armed" })),
            ApiError::Invalid(v) => {
                (StatusCode::BAD_REQUEST, json!({ "error": "invalid configuration", "violations": v }))
            }
            ApiError::Forbidden => (StatusCode::FORBIDDEN, json!({ "error": "only local clients are served" })),
            ApiError::Internal(m) => (StatusCode::INTERNAL_SERVER_ERROR, json!({ "error": m })),
        };
        (status, Json(body)).into_response()
    }
}

impl From<HubError> for ApiError {
    fn from(e: HubError) -> Self {
        match e {
            HubError::NotArmed => ApiError::NotArmed,
            HubError::InvalidConfig(v) => ApiError::Invalid(v),
            HubError::NoTarget(m) => ApiError::NotFound(m),
            HubError::Store(s) => s.into(),
        }
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::NotFound(_) | StoreError::PayloadUnavailable(_) => ApiError::NotFound(e.to_string()),
            StoreError::NotRedactable { .. } | StoreError::EmptyAnnotation => ApiError::BadRequest(e.to_string()),
            other => ApiError::Internal(other.to_string()),
        }
    }
}

type ApiResult<T> = Result<T, ApiError>;

/// Parses an optional JSON body, answering 400 (not 422) on bad input.
fn body<T: DeserializeOwned + Default>(bytes: &Bytes) -> ApiResult<T> {
    if bytes.iter().all(u8::is_ascii_whitespace) {
        return Ok(T::default());
    }
    serde_json::from_slice(bytes).map_err(|e| ApiError::BadRequest(format!("invalid body: {e}")))
}

#[derive(Clone)]
struct Access {
    allowlist: Vec<IpAddr>,
    bound: IpAddr,
}

async fn local_only(
    State(access): State<Arc<Access>>,
    ConnectInfo(peer): ConnectInfo<SocketAddr>,
    req: Request,
    next: Next,
) -> Response {
    if peer_allowed(peer.ip(), access.bound, &access.allowlist) {
        next.run(req).await
    } else {
        ApiError::Forbidden.into_response()
    }
}

pub fn router(shared: Arc<Shared>, allowlist: Vec<IpAddr>, bound: IpAddr) -> Router {
    let access = Arc::new(Access { allowlist, bound });
    Router::new()
        .route("/api/timeline", get(timeline))
        .route("/api/payloads/{seq}", get(payload))
        .route("/api/entries/{seq}", delete(redact))
        .route("/api/entries/{seq}/annotations", post(annotate))
        .route("/api/modes", get(get_modes).put(put_modes))
        .route("/api/control/{name}", post(control))
        .route("/api/export", get(export))
        .route("/api/correlate", get(correlate))
        .route("/api/digest", get(digest))
        .route("/api/stats", get(stats))
        .route("/api/live", get(live))
        .layer(middleware::from_fn_with_state(access, local_only))
        .with_state(shared)
}

#[derive(Deserialize)]
struct TimelineParams {
    from: Option<u64>,
    to: Option<u64>,
    kinds: Option<String>,
}

async fn timeline(State(s): State<Arc<Shared>>, Query(p): Query<TimelineParams>) -> ApiResult<Response> {
    let kinds = match p.kinds.as_deref().filter(|k| !k.is_empty()) {
        None => None,
        Some(list) => Some(
            list.split(',')
                .map(|k| k.trim().parse::<EntryKind>().map_err(|e| ApiError::BadRequest(e.to_string())))
                .collect::<ApiResult<BTreeSet<_>>>()?,
        ),
    };
    let q = TimelineQuery {
        from: p.from.map(hub_core::model::Timestamp),
        to: p.to.map(hub_core::model::Timestamp),
        kinds,
        include_redacted_metadata: true,
    };
    Ok(Json(s.read(|hub| hub.store().timeline(&q))).into_response())
}

async fn payload(State(s): State<Arc<Shared>>, Path(seq): Path<u64>) -> ApiResult<Response> {
    let bytes = s.read(|hub| {
        let entry = hub.store().get(seq).ok_or(StoreError::NotFound(seq))?;
        if entry.redacted {
            return Err(StoreError::PayloadUnavailable(seq));
        }
        hub.store().payload(seq)
    })?;
    Ok(([(header::CONTENT_TYPE, "application/octet-stream")], bytes).into_response())
}

#[derive(Deserialize)]
struct ActorBody {
    #[serde(default = "default_actor")]
    actor: String,
}

impl Default for ActorBody {
    fn default() -> Self {
        ActorBody { actor: default_actor() }
    }
}

fn default_actor() -> String {
    DEFAULT_ACTOR.to_string()
}

async fn redact(State(s): State<Arc<Shared>>, Path(seq): Path<u64>, raw: Bytes) -> ApiResult<Response> {
    let b: ActorBody = body(&raw)?;
    let tomb = s.mutate(|hub, _| hub.redact(seq, &b.actor))?;
    Ok(Json(tomb).into_response())
}

#[derive(Deserialize, Default)]
struct AnnotationBody {
    #[serde(default = "default_actor")]
    actor: String,
    #[serde(default)]
    text: String,
}

async fn annotate(State(s): State<Arc<Shared>>, Path(seq): Path<u64>, raw: Bytes) -> ApiResult<Response> {
    let b: AnnotationBody = body(&raw)?;
    let note = s.mutate(|hub, _| hub.annotate(seq, &b.actor, &b.text))?;
    Ok((StatusCode::CREATED, Json(note)).into_response())
}

async fn get_modes(State(s): State<Arc<Shared>>) -> Json<PolicyConfig> {
    Json(s.read(|hub| hub.config().clone()))
}

/// Parses a full or partial PolicyConfig document; unknown keys are errors.
fn parse_modes(raw: &Bytes) -> ApiResult<PolicyConfig> {
    let bad = |e: String| ApiError::BadRequest(format!("invalid body: {e}"));
    let doc: serde_json::Value = serde_json::from_slice(raw).map_err(|e| bad(e.to_string()))?;
    let known = serde_json::to_value(PolicyConfig::default()).expect("config serializes");
    let (Some(doc_map), Some(known)) = (doc.as_object(), known.as_object()) else {
        return Err(bad("expected an object".into()));
    };
    if let Some(key) = doc_map.keys().find(|k| !known.contains_key(*k)) {
        return Err(bad(format!("unknown field {key:?}")));
    }
    serde_json::from_value(doc).map_err(|e| bad(e.to_string()))
}

async fn put_modes(State(s): State<Arc<Shared>>, raw: Bytes) -> ApiResult<Response> {
    let cfg = parse_modes(&raw)?;
    let applied = s.mutate(|hub, _| {
        hub.reconfigure(cfg, DEFAULT_ACTOR)?;
        Ok(hub.config().clone())
    })?;
    Ok(Json(applied).into_response())
}

fn control_action(name: &str) -> Option<Action> {
    Some(match name {
        "disable" => Action::Disable,
        "postpone" => Action::Postpone,
        "toggle" => Action::ToggleSwitch,
        "extend" => Action::Extend,
        "capture_after" => Action::CaptureAfter,
        "manual" => Action::ManualCapture,
        _ => return None,
    })
}

async fn control(State(s): State<Arc<Shared>>, Path(name): Path<String>, raw: Bytes) -> ApiResult<Response> {
    let action = control_action(&name).ok_or_else(|| ApiError::NotFound(format!("unknown control {name:?}")))?;
    let b: ActorBody = body(&raw)?;
    let (seq, ts) = s.mutate(|hub, now| {
        let pa = ParticipantAction { actor: b.actor.clone(), ts: now, action };
        let seq = hub.apply_action(DEFAULT_ACTOR, &pa)?;
        Ok((seq, now))
    })?;
    Ok(Json(json!({ "seq": seq, "ts": ts })).into_response())
}

async fn export(State(s): State<Arc<Shared>>) -> ApiResult<Response> {
    let bytes = s.read(|hub| hub.store().export_bytes())?;
    Ok((
        [(header::CONTENT_TYPE, "application/zip"), (header::CONTENT_DISPOSITION, "attachment; filename=\"timeline.zip\"")],
        bytes,
    )
        .into_response())
}

#[derive(Deserialize)]
struct CorrelateParams {
    seq: u64,
    #[serde(default)]
    streams: String,
    window_ms: Option<u64>,
}

async fn correlate(State(s): State<Arc<Shared>>, Query(p): Query<CorrelateParams>) -> ApiResult<Response> {
    let window = p.window_ms.unwrap_or(s.correlation_window_ms);
    if window == 0 {
        return Err(ApiError::BadRequest("window_ms must be positive".into()));
    }
    let streams: Vec<String> =
        p.streams.split(',').map(str::trim).filter(|x| !x.is_empty()).map(String::from).collect();
    let result = s.read(|hub| hub.correlate(p.seq, &streams, window))?;
    Ok(Json(result).into_response())
}

async fn digest(State(s): State<Arc<Shared>>) -> Json<serde_json::Value> {
    Json(s.read(|hub| json!({ "digest": hub.store().digest(), "entries": hub.store().len() })))
}

async fn stats(State(s): State<Arc<Shared>>) -> Json<hub_core::HubStats> {
    Json(s.read(|hub| hub.stats()))
}

async fn live(State(s): State<Arc<Shared>>, ws: WebSocketUpgrade) -> Response {
    let rx = s.subscribe_live();
    ws.on_upgrade(move |socket| push_live(socket, rx))
}

async fn push_live(mut socket: WebSocket, mut rx: tokio::sync::broadcast::Receiver<LiveEvent>) {
    loop {
        let event = match rx.recv().await {
            Ok(e) => e,
            Err(RecvError::Lagged(missed)) => LiveEvent::Gap { missed },
            Err(RecvError::Closed) => break,
        };
        let text = serde_json::to_string(&event).expect("live events serialize");
        if socket.send(Message::Text(text.into())).await.is_err() {
            break;
        }
    }
}
