//! HTTP service over the session store.
//!
//! Every mutation appends to the session history and persists it before the
//! response is built, so a client that lost a response can retry with the
//! same `Idempotency-Key` and get the recorded outcome instead of a second
//! record. Requests on one session are serialized; different sessions run
//! independently. Model work runs inline on the request task, which is fine
//! for the small, single-user sessions this serves.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::{Path, RawQuery, State};
use axum::http::{HeaderMap, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use tokio::sync::Mutex as AsyncMutex;

use crate::error::{Result, SessionError};
use crate::session::{CreateSession, Event, Session, SessionDocument, SCHEMA_VERSION};
use crate::store::SessionStore;
use crate::view::{default_grid, pair_view, session_view, RenderSpec, SessionSummary};

pub const IDEMPOTENCY_HEADER: &str = "idempotency-key";
/// Set on responses to a retried request that changed nothing.
pub const REPLAYED_HEADER: &str = "idempotent-replayed";

type Slot = Arc<AsyncMutex<Option<Session>>>;

struct Inner {
    store: SessionStore,
    /// Live sessions, loaded lazily. An empty slot means "read from disk".
    sessions: Mutex<HashMap<String, Slot>>,
    /// Serializes creation so token lookups cannot race.
    create: AsyncMutex<()>,
}

#[derive(Clone)]
pub struct AppState {
    inner: Arc<Inner>,
}

impl AppState {
    pub fn new(store: SessionStore) -> Self {
        AppState {
            inner: Arc::new(Inner {
                store,
                sessions: Mutex::new(HashMap::new()),
                create: AsyncMutex::new(()),
            }),
        }
    }

    pub fn store(&self) -> &SessionStore {
        &self.inner.store
    }

    fn slot(&self, id: &str) -> Slot {
        let mut map = self.inner.sessions.lock().expect("session map poisoned");
        map.entry(id.to_string()).or_default().clone()
    }

    /// Runs `f` on the session under its lock. When `f` reports a change,
    /// the document is persisted before returning; if that fails the cached
    /// copy is dropped so the next request reloads what is on disk.
    async fn with_session<T>(
        &self,
        id: &str,
        f: impl FnOnce(&mut Session) -> Result<(T, bool)>,
    ) -> Result<T> {
        let slot = self.slot(id);
        let mut guard = slot.lock().await;
        if guard.is_none() {
            *guard = Some(Session::from_document(self.inner.store.load(id)?)?);
        }
        let session = guard.as_mut().expect("loaded above");
        let (out, changed) = f(session)?;
        if changed {
            if let Err(e) = self.inner.store.save(session.document()) {
                *guard = None;
                return Err(e);
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub field: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorEnvelope {
    pub error: ErrorBody,
}

pub struct ApiError(pub SessionError);

impl From<SessionError> for ApiError {
    fn from(e: SessionError) -> Self {
        ApiError(e)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = match &self.0 {
            SessionError::NotFound(_) => StatusCode::NOT_FOUND,
            SessionError::WrongMode { .. } => StatusCode::BAD_REQUEST,
            SessionError::Conflict(_) => StatusCode::CONFLICT,
            SessionError::Validation { .. } => StatusCode::UNPROCESSABLE_ENTITY,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        let (field, message) = match &self.0 {
            SessionError::Validation { field, message } => (Some(field.clone()), message.clone()),
            other => (None, other.to_string()),
        };
        let body = ErrorEnvelope {
            error: ErrorBody {
                code: self.0.code().to_string(),
                message,
                field,
            },
        };
        (status, Json(body)).into_response()
    }
}

type ApiResult<T> = std::result::Result<T, ApiError>;

fn parse_body<T: DeserializeOwned>(body: &Bytes) -> Result<T> {
    let de = &mut serde_json::Deserializer::from_slice(body);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let field = if path == "." {
            "body".to_string()
        } else {
            path
        };
        SessionError::validation(field, e.into_inner().to_string())
    })
}

fn token(headers: &HeaderMap) -> Result<Option<String>> {
    let Some(value) = headers.get(IDEMPOTENCY_HEADER) else {
        return Ok(None);
    };
    let text = value
        .to_str()
        .ok()
        .filter(|t| !t.is_empty() && t.len() <= 200)
        .ok_or_else(|| {
            SessionError::validation(
                "Idempotency-Key",
                "must be 1 to 200 visible ASCII characters",
            )
        })?;
    Ok(Some(text.to_string()))
}

fn replayed(mut response: Response, was_replay: bool) -> Response {
    if was_replay {
        response
            .headers_mut()
            .insert(REPLAYED_HEADER, HeaderValue::from_static("true"));
    }
    response
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/sessions", get(list_sessions).post(create_session))
        .route("/sessions/{id}", get(read_session).delete(delete_session))
        .route("/sessions/{id}/pair", get(get_pair))
        .route(
            "/sessions/{id}/preference",
            axum::routing::post(post_preference),
        )
        .route("/sessions/{id}/state", get(get_state))
        .route("/sessions/{id}/proposal", get(get_proposal))
        .route(
            "/sessions/{id}/observation",
            axum::routing::post(post_observation),
        )
        .with_state(state)
}

async fn health() -> Json<serde_json::Value> {
    Json(serde_json::json!({ "status": "ok", "schema_version": SCHEMA_VERSION }))
}

async fn create_session(
    State(state): State<AppState>,
    headers: HeaderMap,
    body: Bytes,
) -> ApiResult<Response> {
    let token = token(&headers)?;
    let request: CreateSession = parse_body(&body)?;
    let _guard = state.inner.create.lock().await;
    if let Some(t) = &token {
        if let Some(id) = state.store().find_created_by(t)? {
            let view = state
                .with_session(&id, |s| Ok((session_view(s, None)?, false)))
                .await?;
            return Ok(replayed((StatusCode::OK, Json(view)).into_response(), true));
        }
    }
    let config = request.into_config()?;
    let id = uuid::Uuid::new_v4().simple().to_string();
    let session = Session::create(id.clone(), config, token)?;
    state.store().save(session.document())?;
    let view = session_view(&session, None)?;
    *state.slot(&id).lock().await = Some(session);
    Ok((StatusCode::CREATED, Json(view)).into_response())
}

/// Iteration count read straight from the history, without a replay.
fn summary(doc: &SessionDocument) -> SessionSummary {
    let iteration = doc
        .history
        .iter()
        .filter(|e| {
            matches!(
                e.event,
                Event::Observation { .. } | Event::Preference { .. }
            )
        })
        .count();
    SessionSummary {
        id: doc.id.clone(),
        mode: doc.config.mode(),
        iteration,
        created_ms: doc.created_ms,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionList {
    pub sessions: Vec<SessionSummary>,
}

async fn list_sessions(State(state): State<AppState>) -> ApiResult<Json<SessionList>> {
    let mut sessions = Vec::new();
    for id in state.store().ids()? {
        // Unreadable documents stay reachable by id, which reports why.
        match state.store().load(&id) {
            Ok(doc) => sessions.push(summary(&doc)),
            Err(SessionError::NotFound(_) | SessionError::Format(_)) => {}
            Err(e) => return Err(e.into()),
        }
    }
    sessions.sort_by(|a, b| a.created_ms.cmp(&b.created_ms).then(a.id.cmp(&b.id)));
    Ok(Json(SessionList { sessions }))
}

async fn read_session(
    State(state): State<AppState>,
    Path(id): Path<String>,
) -> ApiResult<Response> {
    let view = state
        .with_session(&id, |s| Ok((session_view(s, None)?, false)))
        .await?;
    Ok(Json(view).into_response())
}

async fn delete_session(
    State(state): State<AppState>,
    Path(id): Path<String>,
) -> ApiResult<StatusCode> {
    let slot = state.slot(&id);
    let mut guard = slot.lock().await;
    let result = state.store().delete(&id);
    *guard = None;
    state
        .inner
        .sessions
        .lock()
        .expect("session map poisoned")
        .remove(&id);
    result?;
    Ok(StatusCode::NO_CONTENT)
}

async fn get_pair(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    let view = state
        .with_session(&id, |s| {
            let (pair, grew) = s.pair()?;
            Ok((pair_view(s, &pair), grew))
        })
        .await?;
    Ok(Json(view).into_response())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PreferenceRequest {
    pub winner_index: usize,
}

async fn post_preference(
    State(state): State<AppState>,
    Path(id): Path<String>,
    headers: HeaderMap,
    body: Bytes,
) -> ApiResult<Response> {
    let token = token(&headers)?;
    let request: PreferenceRequest = parse_body(&body)?;
    let (view, recorded) = state
        .with_session(&id, |s| {
            let recorded = s.prefer(request.winner_index, token)?;
            Ok(((session_view(s, None)?, recorded), recorded))
        })
        .await?;
    Ok(replayed(Json(view).into_response(), !recorded))
}

/// `grid=N`: posterior points per dimension, capped at 512.
fn grid_param(query: Option<&str>) -> Result<Option<usize>> {
    let Some(query) = query else { return Ok(None) };
    let mut grid = None;
    for pair in query.split('&').filter(|p| !p.is_empty()) {
        match pair.split_once('=') {
            Some(("grid", v)) => {
                let n = v.parse::<usize>().map_err(|_| {
                    SessionError::validation("grid", format!("{v:?} is not a point count"))
                })?;
                grid = Some(n);
            }
            _ => {
                return Err(SessionError::validation(
                    pair.split('=').next().unwrap_or(pair),
                    "unknown parameter",
                ))
            }
        }
    }
    Ok(grid)
}

async fn get_state(
    State(state): State<AppState>,
    Path(id): Path<String>,
    RawQuery(query): RawQuery,
) -> ApiResult<Response> {
    let grid = grid_param(query.as_deref())?;
    let view = state
        .with_session(&id, |s| {
            let n = grid.unwrap_or_else(|| default_grid(s.bounds().dim()));
            Ok((session_view(s, Some(n))?, false))
        })
        .await?;
    Ok(Json(view).into_response())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProposalView {
    pub iteration: usize,
    pub x: Vec<f64>,
    pub render: RenderSpec,
}

async fn get_proposal(
    State(state): State<AppState>,
    Path(id): Path<String>,
) -> ApiResult<Response> {
    let view = state
        .with_session(&id, |s| {
            let x = s.propose()?;
            let render = RenderSpec::for_point(s.bounds(), &x);
            Ok((
                ProposalView {
                    iteration: s.iteration(),
                    x,
                    render,
                },
                false,
            ))
        })
        .await?;
    Ok(Json(view).into_response())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservationRequest {
    pub x: Vec<f64>,
    pub y: f64,
}

async fn post_observation(
    State(state): State<AppState>,
    Path(id): Path<String>,
    headers: HeaderMap,
    body: Bytes,
) -> ApiResult<Response> {
    let token = token(&headers)?;
    let request: ObservationRequest = parse_body(&body)?;
    let (view, recorded) = state
        .with_session(&id, |s| {
            let recorded = s.observe(request.x, request.y, token)?;
            Ok(((session_view(s, None)?, recorded), recorded))
        })
        .await?;
    Ok(replayed(Json(view).into_response(), !recorded))
}

/// Binds `addr` and serves until Ctrl-C.
pub async fn serve(addr: SocketAddr, data_dir: PathBuf) -> std::io::Result<()> {
    let store = SessionStore::open(&data_dir)?;
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!(
        "bayesopt service on http://{} (sessions in {})",
        listener.local_addr()?,
        data_dir.display()
    );
    axum::serve(listener, router(AppState::new(store)))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
