//! HTTP API over a recourse [`Engine`].
//!
//! ```text
//! GET  /api/schema
//! GET  /api/subjects
//! POST /api/session
//! POST /api/session/{id}/select
//! POST /api/session/{id}/undo
//! GET  /api/session/{id}/path
//! GET  /api/session/{id}/candidates[?limit=all]
//! ```
//!
//! Errors carry `{code, message}`. Static UI assets, when configured, are
//! served from `/`.

pub mod session;
pub mod wire;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, OnceLock};
use std::time::{Duration, Instant};

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use recourse_core::recourse::undo;
use recourse_core::{ConstraintSet, Engine, RecourseError};
use serde::{Deserialize, Serialize};
use tokio::net::TcpListener;
use tower_http::services::ServeDir;
use tower_http::trace::{DefaultMakeSpan, DefaultOnResponse, TraceLayer};
use tracing::Level;

use crate::session::{Session, SessionStore};
use crate::wire::{
    to_json_bytes, CandidatesDoc, ErrorDoc, PathDoc, SchemaDoc, SelectRequest, SessionDoc,
    SessionRequest, StepDoc, SubjectsDoc,
};

pub const DEFAULT_ADDR: &str = "127.0.0.1:8750";
/// Candidate lists are truncated to this many entries unless `?limit=all`.
pub const CANDIDATE_CAP: usize = 50;

#[derive(Debug, Clone, Default)]
pub struct ServiceConfig {
    pub ui_dir: Option<PathBuf>,
    pub session_idle_timeout: Option<Duration>,
}

/// Shared server state. The engine slot is empty until boot-time
/// precomputation finishes; API calls answer 503 until then.
#[derive(Debug)]
pub struct AppState {
    engine: OnceLock<Arc<Engine>>,
    sessions: SessionStore,
}

impl AppState {
    pub fn new(config: &ServiceConfig) -> Arc<Self> {
        Arc::new(Self {
            engine: OnceLock::new(),
            sessions: SessionStore::new(config.session_idle_timeout),
        })
    }

    pub fn with_engine(engine: Arc<Engine>, config: &ServiceConfig) -> Arc<Self> {
        let state = Self::new(config);
        state.install(engine);
        state
    }

    /// Publishes the engine; later calls are ignored.
    pub fn install(&self, engine: Arc<Engine>) {
        let _ = self.engine.set(engine);
    }

    pub fn is_ready(&self) -> bool {
        self.engine.get().is_some()
    }

    fn engine(&self) -> Result<&Arc<Engine>, ApiError> {
        self.engine.get().ok_or_else(|| {
            ApiError::new(
                StatusCode::SERVICE_UNAVAILABLE,
                "not_ready",
                "attribution table is still being computed",
            )
        })
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    doc: ErrorDoc,
}

impl ApiError {
    fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        Self {
            status,
            doc: ErrorDoc {
                code: code.to_string(),
                message: message.into(),
            },
        }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "bad_request", message)
    }

    fn unknown_session(id: &str) -> Self {
        Self::new(
            StatusCode::NOT_FOUND,
            "unknown_session",
            format!("no session `{id}`"),
        )
    }
}

impl From<RecourseError> for ApiError {
    fn from(e: RecourseError) -> Self {
        let message = e.to_string();
        match e {
            RecourseError::NotACandidate(_) => {
                Self::new(StatusCode::CONFLICT, "not_a_candidate", message)
            }
            RecourseError::EmptyPath => Self::new(StatusCode::CONFLICT, "empty_path", message),
            RecourseError::UnknownSubject(_) => {
                Self::new(StatusCode::NOT_FOUND, "unknown_subject", message)
            }
            RecourseError::InvalidConstraints(_) => {
                Self::new(StatusCode::BAD_REQUEST, "invalid_constraints", message)
            }
            RecourseError::SameSubject(_) | RecourseError::Attribution(_) => {
                Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
            }
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        json(self.status, &self.doc)
    }
}

fn json<T: Serialize>(status: StatusCode, doc: &T) -> Response {
    (
        status,
        [(header::CONTENT_TYPE, "application/json")],
        to_json_bytes(doc),
    )
        .into_response()
}

fn ok<T: Serialize>(doc: &T) -> Response {
    json(StatusCode::OK, doc)
}

pub fn router(state: Arc<AppState>, config: &ServiceConfig) -> Router {
    let api = Router::new()
        .route("/api/schema", get(get_schema))
        .route("/api/subjects", get(get_subjects))
        .route("/api/session", post(create_session))
        .route("/api/session/{id}/select", post(select))
        .route("/api/session/{id}/undo", post(undo_step))
        .route("/api/session/{id}/path", get(get_path))
        .route("/api/session/{id}/candidates", get(get_candidates))
        .with_state(state);
    let app = match &config.ui_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    };
    app.layer(
        TraceLayer::new_for_http()
            .make_span_with(DefaultMakeSpan::new().level(Level::INFO))
            .on_response(DefaultOnResponse::new().level(Level::INFO))
            .on_failure(()),
    )
}

/// Binds `addr`. Kept separate from [`serve`] so bind failures surface
/// before any expensive startup work.
pub async fn bind(addr: &str) -> std::io::Result<TcpListener> {
    TcpListener::bind(addr).await
}

pub async fn serve(listener: TcpListener, app: Router) -> std::io::Result<()> {
    axum::serve(listener, app).await
}

pub fn local_addr(listener: &TcpListener) -> std::io::Result<SocketAddr> {
    listener.local_addr()
}

async fn get_schema(State(state): State<Arc<AppState>>) -> Result<Response, ApiError> {
    Ok(ok(&SchemaDoc::new(state.engine()?.schema())))
}

async fn get_subjects(State(state): State<Arc<AppState>>) -> Result<Response, ApiError> {
    Ok(ok(&SubjectsDoc::new(state.engine()?)))
}

async fn create_session(
    State(state): State<Arc<AppState>>,
    body: Bytes,
) -> Result<Response, ApiError> {
    let engine = state.engine()?;
    let request: SessionRequest = if body.iter().all(u8::is_ascii_whitespace) {
        SessionRequest::default()
    } else {
        serde_json::from_slice(&body).map_err(|e| ApiError::bad_request(e.to_string()))?
    };
    let constraints = request.apply(ConstraintSet::for_schema(engine.schema()));
    constraints.validate(engine.schema())?;
    let target = request
        .target_outcome
        .unwrap_or(recourse_core::recourse::DEFAULT_TARGET_OUTCOME);
    if !(0.0..=1.0).contains(&target) {
        return Err(ApiError::bad_request("target_outcome must lie in [0, 1]"));
    }
    let session_id = state.sessions.create(constraints.clone(), target);
    Ok(ok(&SessionDoc {
        session_id,
        target_outcome: target,
        constraints: (&constraints).into(),
    }))
}

fn session(state: &AppState, id: &str) -> Result<Arc<tokio::sync::Mutex<Session>>, ApiError> {
    state
        .sessions
        .get(id)
        .ok_or_else(|| ApiError::unknown_session(id))
}

fn step_doc(engine: &Engine, s: &Session, limit: Option<usize>) -> Result<StepDoc, ApiError> {
    let ranked = engine.find_candidates(&s.path, &s.constraints)?;
    Ok(StepDoc {
        path: PathDoc::new(engine.schema(), &s.path),
        candidates: CandidatesDoc::new(&ranked, limit),
    })
}

async fn select(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Response, ApiError> {
    let engine = state.engine()?;
    let request: SelectRequest =
        serde_json::from_slice(&body).map_err(|e| ApiError::bad_request(e.to_string()))?;
    let handle = session(&state, &id)?;
    let mut s = handle.lock().await;
    let next = if s.path.is_empty() {
        engine.start(&request.subject_id, s.path.target_outcome)?
    } else {
        engine.extend_path(&s.path, &request.subject_id, &s.constraints)?
    };
    s.path = next;
    s.last_used = Instant::now();
    Ok(ok(&step_doc(engine, &s, Some(CANDIDATE_CAP))?))
}

async fn undo_step(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> Result<Response, ApiError> {
    let engine = state.engine()?;
    let handle = session(&state, &id)?;
    let mut s = handle.lock().await;
    s.path = undo(&s.path)?;
    s.last_used = Instant::now();
    Ok(ok(&step_doc(engine, &s, Some(CANDIDATE_CAP))?))
}

async fn get_path(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> Result<Response, ApiError> {
    let engine = state.engine()?;
    let handle = session(&state, &id)?;
    let s = handle.lock().await;
    Ok(ok(&PathDoc::new(engine.schema(), &s.path)))
}

#[derive(Debug, Deserialize)]
struct CandidateQuery {
    limit: Option<String>,
}

async fn get_candidates(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    Query(query): Query<CandidateQuery>,
) -> Result<Response, ApiError> {
    let engine = state.engine()?;
    let limit = match query.limit.as_deref() {
        None => Some(CANDIDATE_CAP),
        Some("all") => None,
        Some(n) => Some(
            n.parse::<usize>()
                .map_err(|_| ApiError::bad_request("limit must be `all` or a count"))?,
        ),
    };
    let handle = session(&state, &id)?;
    let s = handle.lock().await;
    let ranked = engine.find_candidates(&s.path, &s.constraints)?;
    Ok(ok(&CandidatesDoc::new(&ranked, limit)))
}
