//! HTTP JSON adapter for the web console. Every endpoint forwards to the
//! in-process catalog, composer and session operations; nothing here adds
//! behaviour of its own beyond locking and persistence.

use std::collections::{BTreeMap, HashMap};
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::{Path, State};
use axum::http::{HeaderValue, Method, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tokio::sync::Mutex;
use tower_http::cors::{AllowOrigin, CorsLayer};
use tracing::{info, warn};

use ppc_core::catalog::{load_builtin_catalog, Catalog};
use ppc_core::composer::{check, compile, CompileError};
use ppc_core::extract::Artifact;
use ppc_core::llm::{ChatProvider, LlmError};
use ppc_core::pdl::{has_errors, parse_pipeline, Diagnostic, PipelineSpec};
use ppc_core::session::{Session, SessionError, SessionStatus, Turn};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{code}: {message}")]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
    pub diagnostics: Vec<Diagnostic>,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self { status, code, message: message.into(), diagnostics: Vec::new() }
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "bad-request", message)
    }

    pub fn not_found(what: &str, id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not-found", format!("no {what} `{id}`"))
    }

    pub fn invalid_pipeline(diagnostics: Vec<Diagnostic>) -> Self {
        Self {
            diagnostics,
            ..Self::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid-pipeline", "the pipeline has errors")
        }
    }
}

impl From<SessionError> for ApiError {
    fn from(e: SessionError) -> Self {
        match e {
            SessionError::NotInteractive(_) | SessionError::PendingReply => {
                ApiError::new(StatusCode::CONFLICT, "session-conflict", e.to_string())
            }
            SessionError::Provider(p) => ApiError::from(p),
            SessionError::EmptyPlan => ApiError::invalid_pipeline(Vec::new()),
            other => ApiError::new(StatusCode::BAD_GATEWAY, "session-failure", other.to_string()),
        }
    }
}

impl From<LlmError> for ApiError {
    fn from(e: LlmError) -> Self {
        ApiError::new(StatusCode::BAD_GATEWAY, "provider-failure", e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut body = json!({ "code": self.code, "message": self.message });
        if !self.diagnostics.is_empty() {
            body["diagnostics"] = serde_json::to_value(&self.diagnostics).unwrap_or(Value::Null);
        }
        (self.status, Json(body)).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

/// Shared server state. Each session sits behind its own lock so turns
/// for one session run one at a time while other sessions proceed.
pub struct AppState {
    pub catalog: Catalog,
    pub provider: Arc<dyn ChatProvider>,
    /// Transcripts are written to `<workdir>/sessions/<id>.json`.
    pub workdir: Option<PathBuf>,
    sessions: std::sync::Mutex<HashMap<String, Arc<Mutex<Session>>>>,
    id_source: Box<dyn Fn() -> String + Send + Sync>,
}

impl AppState {
    pub fn new(provider: Arc<dyn ChatProvider>, workdir: Option<PathBuf>) -> Self {
        Self {
            catalog: load_builtin_catalog(),
            provider,
            workdir,
            sessions: Default::default(),
            id_source: Box::new(Session::random_id),
        }
    }

    /// Replaces the random session ids, for reproducible tests.
    pub fn with_ids(mut self, ids: impl Fn() -> String + Send + Sync + 'static) -> Self {
        self.id_source = Box::new(ids);
        self
    }

    fn session(&self, id: &str) -> Result<Arc<Mutex<Session>>, ApiError> {
        self.sessions.lock().unwrap().get(id).cloned().ok_or_else(|| ApiError::not_found("session", id))
    }

    fn persist(&self, session: &Session) {
        let Some(dir) = &self.workdir else { return };
        let path = dir.join("sessions").join(format!("{}.json", session.session_id));
        if let Err(e) = session.save(&path) {
            warn!(path = %path.display(), "could not save transcript: {e}");
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckRequest {
    pub pdl_text: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckResponse {
    pub ok: bool,
    pub diagnostics: Vec<Diagnostic>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct CreateSessionRequest {
    pub pdl_text: String,
    /// Extra slot values keyed by pattern id, applied to every step of that
    /// pattern. Values already bound in the PDL text win.
    #[serde(default)]
    pub bindings: BTreeMap<String, BTreeMap<String, String>>,
    /// Text for the pipeline's `context` references, keyed by name.
    #[serde(default)]
    pub context_files: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CreateSessionResponse {
    pub session_id: String,
    pub status: SessionStatus,
    pub setup_turns: Vec<Turn>,
    pub diagnostics: Vec<Diagnostic>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TurnRequest {
    pub text: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TurnResponse {
    pub reply: Option<String>,
    pub new_artifacts: Vec<Artifact>,
    pub status: SessionStatus,
}

/// Parses PDL text, merges request bindings into unbound slots, then
/// checks the result against the catalog.
fn checked_pipeline(
    catalog: &Catalog,
    pdl_text: &str,
    bindings: &BTreeMap<String, BTreeMap<String, String>>,
) -> (Option<PipelineSpec>, Vec<Diagnostic>) {
    let (mut spec, mut diags) = parse_pipeline(pdl_text);
    if let Some(spec) = &mut spec {
        for step in &mut spec.steps {
            for (k, v) in bindings.get(&step.pattern_id).into_iter().flatten() {
                step.bindings.entry(k.clone()).or_insert_with(|| v.clone());
            }
        }
        diags.extend(check(spec, catalog));
    }
    (spec, diags)
}

async fn list_catalog(State(state): State<Arc<AppState>>) -> Json<Value> {
    Json(serde_json::to_value(state.catalog.patterns()).unwrap_or_default())
}

async fn get_pattern(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Value> {
    let p = state.catalog.get(&id).map_err(|_| ApiError::not_found("pattern", &id))?;
    Ok(Json(serde_json::to_value(p).unwrap_or_default()))
}

async fn check_pipeline(State(state): State<Arc<AppState>>, Json(req): Json<CheckRequest>) -> Json<CheckResponse> {
    let (spec, diagnostics) = checked_pipeline(&state.catalog, &req.pdl_text, &BTreeMap::new());
    Json(CheckResponse { ok: spec.is_some() && !has_errors(&diagnostics), diagnostics })
}

async fn create_session(
    State(state): State<Arc<AppState>>,
    Json(req): Json<CreateSessionRequest>,
) -> Result<(StatusCode, Json<CreateSessionResponse>), ApiError> {
    let (spec, diagnostics) = checked_pipeline(&state.catalog, &req.pdl_text, &req.bindings);
    let Some(spec) = spec.filter(|_| !has_errors(&diagnostics)) else {
        return Err(ApiError::invalid_pipeline(diagnostics));
    };
    let plan = compile(&spec, &state.catalog, &req.context_files)
        .map_err(|CompileError::Rejected(d)| ApiError::invalid_pipeline(d))?;
    let mut session = Session::create(plan, (state.id_source)())?;
    let provider = state.provider.clone();
    let session = tokio::task::spawn_blocking(move || session.advance(&*provider).map(|_| session))
        .await
        .map_err(|e| ApiError::bad_request(e.to_string()))??;
    state.persist(&session);
    let id = session.session_id.clone();
    info!(session = %id, "session created");
    let body = CreateSessionResponse {
        session_id: id.clone(),
        status: session.status,
        setup_turns: session.turns.clone(),
        diagnostics,
    };
    state.sessions.lock().unwrap().insert(id, Arc::new(Mutex::new(session)));
    Ok((StatusCode::CREATED, Json(body)))
}

async fn post_turn(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    Json(req): Json<TurnRequest>,
) -> ApiResult<TurnResponse> {
    let entry = state.session(&id)?;
    let mut guard = entry.lock_owned().await;
    if guard.status != SessionStatus::Interactive {
        return Err(ApiError::new(
            StatusCode::CONFLICT,
            "session-closed",
            format!("session `{id}` is not interactive"),
        ));
    }
    let provider = state.provider.clone();
    let (guard, outcome) = tokio::task::spawn_blocking(move || {
        let outcome = guard.user_turn(&*provider, &req.text);
        (guard, outcome)
    })
    .await
    .map_err(|e| ApiError::bad_request(e.to_string()))?;
    state.persist(&guard);
    let outcome = outcome?;
    Ok(Json(TurnResponse { reply: outcome.reply, new_artifacts: outcome.new_artifacts, status: guard.status }))
}

async fn get_session(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Value> {
    let entry = state.session(&id)?;
    let session = entry.lock().await;
    Ok(Json(serde_json::to_value(&*session).unwrap_or_default()))
}

async fn get_artifacts(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Vec<Artifact>> {
    let entry = state.session(&id)?;
    let session = entry.lock().await;
    Ok(Json(session.artifacts.clone()))
}

fn is_loopback_origin(origin: &HeaderValue) -> bool {
    let Ok(origin) = origin.to_str() else { return false };
    let Some(rest) = origin.strip_prefix("http://").or_else(|| origin.strip_prefix("https://")) else {
        return false;
    };
    let host = if rest.starts_with('[') {
        rest.split_inclusive(']').next().unwrap_or("")
    } else {
        rest.split(':').next().unwrap_or("")
    };
    matches!(host, "localhost" | "127.0.0.1" | "[::1]")
}

pub fn router(state: Arc<AppState>) -> Router {
    let cors = CorsLayer::new()
        .allow_origin(AllowOrigin::predicate(|origin, _| is_loopback_origin(origin)))
        .allow_methods([Method::GET, Method::POST])
        .allow_headers([axum::http::header::CONTENT_TYPE]);
    Router::new()
        .route("/api/catalog", get(list_catalog))
        .route("/api/catalog/{id}", get(get_pattern))
        .route("/api/pipelines/check", post(check_pipeline))
        .route("/api/sessions", post(create_session))
        .route("/api/sessions/{id}", get(get_session))
        .route("/api/sessions/{id}/turns", post(post_turn))
        .route("/api/sessions/{id}/artifacts", get(get_artifacts))
        .layer(cors)
        .with_state(state)
}

/// Loopback address for `port`; 0 picks a free port.
pub fn loopback(port: u16) -> SocketAddr {
    SocketAddr::from(([127, 0, 0, 1], port))
}

/// Binds `addr` and serves until the process ends. `on_bound` receives
/// the bound address, which matters when the port was 0.
pub async fn serve(addr: SocketAddr, state: Arc<AppState>, on_bound: impl FnOnce(SocketAddr)) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    let bound = listener.local_addr()?;
    info!(%bound, "listening");
    on_bound(bound);
    axum::serve(listener, router(state)).await
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loopback_origins() {
        for ok in ["http://localhost:5173", "http://127.0.0.1", "https://[::1]:8080", "http://localhost"] {
            assert!(is_loopback_origin(&HeaderValue::from_static(ok)), "{ok}");
        }
        for bad in
            ["http://example.com", "http://localhost.evil.com", "null", "http://127.0.0.2:80", "file://localhost"]
        {
            assert!(!is_loopback_origin(&HeaderValue::from_static(bad)), "{bad}");
        }
    }

    #[test]
    fn session_errors_map_to_statuses() {
        assert_eq!(ApiError::from(SessionError::NotInteractive(SessionStatus::Closed)).status, StatusCode::CONFLICT);
        assert_eq!(ApiError::from(SessionError::Provider(LlmError::Timeout)).status, StatusCode::BAD_GATEWAY);
        assert_eq!(ApiError::invalid_pipeline(vec![]).status, StatusCode::UNPROCESSABLE_ENTITY);
        assert_eq!(loopback(0).ip().to_string(), "127.0.0.1");
    }
}
