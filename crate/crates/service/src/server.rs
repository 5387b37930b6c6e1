//! HTTP API for live sessions.
//!
//! | method | path | |
//! |---|---|---|
//! | POST | /sessions | start a session |
//! | GET | /sessions/{id}/state | visible state |
//! | POST | /sessions/{id}/actions | apply a user action |
//! | POST | /sessions/{id}/survey | submit a survey form |
//! | GET | /traces/{id} | full trace of an ended session |
//! | GET | /health | liveness |
//!
//! Timestamps come from the server clock, never from the client. Every event
//! is appended to the session's trace file before the response is sent.

use std::collections::{BTreeMap, HashMap};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use interlace_core::store::{TraceStore, TraceWriter};
use interlace_core::survey::SurveySubmission;
use interlace_core::tasks::TaskAdapter;
use interlace_core::trace::{
    ActionKind, ActionOutcome, EndReason, InteractionTrace, Millis, Payload, Session, SessionId, SessionState,
    TraceEvent, UserAction,
};
use interlace_core::{LmClient, TaskKind};
use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::config::Environment;

/// Source of server time in milliseconds.
pub trait Clock: Send + Sync {
    fn now_ms(&self) -> Millis;
}

pub struct SystemClock;

impl Clock for SystemClock {
    fn now_ms(&self) -> Millis {
        SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis() as Millis).unwrap_or(0)
    }
}

/// A clock that only moves when told to. Used by tests.
#[derive(Default)]
pub struct ManualClock(AtomicU64);

impl ManualClock {
    pub fn new(start: Millis) -> Self {
        Self(AtomicU64::new(start))
    }

    pub fn advance(&self, ms: Millis) {
        self.0.fetch_add(ms, Ordering::SeqCst);
    }
}

impl Clock for ManualClock {
    fn now_ms(&self) -> Millis {
        self.0.load(Ordering::SeqCst)
    }
}

struct Live {
    trace: Option<InteractionTrace>,
    state: SessionState,
    client: LmClient,
    writer: TraceWriter,
}

impl Live {
    fn trace(&self) -> &InteractionTrace {
        self.trace.as_ref().expect("trace is present between calls")
    }

    /// Runs `f` on a resumed session and writes out whatever it appended.
    fn with_session<T>(&mut self, env: &Environment, f: impl FnOnce(&mut Session<'_>) -> T) -> Result<T, ApiError> {
        let trace = self.trace.take().expect("trace is present between calls");
        let before = trace.events.len();
        let mut session = Session::resume(trace, self.state.clone(), &self.client, &env.surveys);
        let out = f(&mut session);
        let (trace, state) = session.into_parts();
        let fresh: Vec<TraceEvent> = trace.events[before..].to_vec();
        self.trace = Some(trace);
        self.state = state;
        for event in &fresh {
            self.writer.append_event(event).map_err(|e| ApiError::internal(e.to_string()))?;
        }
        Ok(out)
    }
}

pub struct AppState {
    env: Arc<Environment>,
    store: TraceStore,
    clock: Arc<dyn Clock>,
    sessions: RwLock<HashMap<String, Arc<Mutex<Live>>>>,
    counter: AtomicU64,
}

impl AppState {
    pub fn new(env: Arc<Environment>, store: TraceStore, clock: Arc<dyn Clock>) -> Arc<Self> {
        Arc::new(Self { env, store, clock, sessions: RwLock::new(HashMap::new()), counter: AtomicU64::new(0) })
    }

    fn session(&self, id: &str) -> Result<Arc<Mutex<Live>>, ApiError> {
        self.sessions
            .read()
            .expect("session table lock")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, format!("no session {id:?}")))
    }

    /// Ends every session whose timer has run out. Returns how many ended.
    pub fn tick(&self) -> usize {
        let now = self.clock.now_ms();
        let live: Vec<_> = self.sessions.read().expect("session table lock").values().cloned().collect();
        let mut ended = 0;
        for cell in live {
            let mut live = cell.lock().expect("session lock");
            if live.state.is_ended() {
                continue;
            }
            match live.with_session(&self.env, |s| s.tick(now)) {
                Ok(true) => ended += 1,
                Ok(false) => {}
                Err(e) => tracing::error!(error = %e.message, "tick failed"),
            }
        }
        ended
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
    state: Option<StateView>,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self { status, message: message.into(), state: None }
    }

    fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = serde_json::json!({ "error": self.message, "state": self.state });
        (self.status, Json(body)).into_response()
    }
}

/// What a client may see of a session. Hidden task fields never appear.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateView {
    pub session_id: String,
    pub task: TaskKind,
    pub model_id: String,
    pub step_index: u64,
    /// Number of events in the trace. Changes whenever anything is recorded.
    pub state_version: u64,
    pub ended: bool,
    pub end_reason: Option<EndReason>,
    pub elapsed_ms: Millis,
    pub time_limit_ms: Option<Millis>,
    pub finish_allowed: bool,
    pub fields: BTreeMap<String, Value>,
    /// Survey forms the participant may submit now.
    pub surveys: Vec<String>,
}

fn view(live: &Live, env: &Environment) -> StateView {
    let state = &live.state;
    let trace = live.trace();
    let surveys = env
        .surveys
        .forms_for(state.task_kind)
        .filter(|f| f.perspective == interlace_core::dims::Perspective::FirstPerson)
        .filter(|f| !f.after_session || state.is_ended())
        .map(|f| f.id.clone())
        .collect();
    StateView {
        session_id: state.session_id.to_string(),
        task: state.task_kind,
        model_id: trace.header.model_id.clone(),
        step_index: state.step_index,
        state_version: trace.events.len() as u64,
        ended: state.is_ended(),
        end_reason: state.ended,
        elapsed_ms: state.elapsed(),
        time_limit_ms: state.task.time_limit(),
        finish_allowed: !state.is_ended() && state.task.finish_allowed(),
        fields: state.visible_fields(),
        surveys,
    }
}

#[derive(Debug, Deserialize)]
pub struct CreateSession {
    pub task: TaskKind,
    pub model_id: String,
    #[serde(default)]
    pub user_id: Option<String>,
    /// Fixes the initial draw (scenario, quiz, puzzle, documents, seed metaphor).
    #[serde(default)]
    pub seed: Option<u64>,
}

#[derive(Debug, Deserialize)]
pub struct ActionRequest {
    pub kind: ActionKind,
    #[serde(default)]
    pub target_field: Option<String>,
    #[serde(default)]
    pub payload: Option<Payload>,
    /// Rejects the request with 409 if the session has moved on.
    #[serde(default)]
    pub expected_version: Option<u64>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ActionResponse {
    pub outcome: ActionOutcome,
    pub events_appended: usize,
    pub state: StateView,
}

pub fn router(app: Arc<AppState>) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}/state", get(get_state))
        .route("/sessions/{id}/actions", post(post_action))
        .route("/sessions/{id}/survey", post(post_survey))
        .route("/traces/{id}", get(get_trace))
        .with_state(app)
}

/// Calls [`AppState::tick`] once a second until the runtime shuts down.
pub fn spawn_ticker(app: Arc<AppState>) -> tokio::task::JoinHandle<()> {
    tokio::spawn(async move {
        let mut interval = tokio::time::interval(Duration::from_secs(1));
        loop {
            interval.tick().await;
            let app = app.clone();
            let _ = tokio::task::spawn_blocking(move || app.tick()).await;
        }
    })
}

async fn health(State(app): State<Arc<AppState>>) -> Json<Value> {
    let n = app.sessions.read().expect("session table lock").len();
    Json(serde_json::json!({ "status": "ok", "sessions": n }))
}

async fn create_session(
    State(app): State<Arc<AppState>>,
    Json(req): Json<CreateSession>,
) -> Result<(StatusCode, Json<StateView>), ApiError> {
    let task_app = app.clone();
    tokio::task::spawn_blocking(move || create_blocking(&task_app, req))
        .await
        .map_err(|e| ApiError::internal(e.to_string()))?
        .map(|v| (StatusCode::CREATED, Json(v)))
}

fn create_blocking(app: &AppState, req: CreateSession) -> Result<StateView, ApiError> {
    let client = app.env.client(&req.model_id).map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, e.to_string()))?;
    let now = app.clock.now_ms();
    let seed = req.seed.unwrap_or_else(|| rand::rng().random());
    let user_id = req.user_id.unwrap_or_else(|| "anonymous".to_string());
    let task = app.env.adapter(req.task).initial_state(seed, now);
    loop {
        let n = app.counter.fetch_add(1, Ordering::SeqCst) + 1;
        let id = SessionId(format!("{}-{n:06}", req.task));
        let path = app.store.path_for(req.task, &id);
        if path.exists() {
            continue;
        }
        let initial = SessionState::new(id.clone(), task.clone(), now);
        let session = Session::start(initial, &user_id, now, &client, &app.env.surveys);
        let (trace, state) = session.into_parts();
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| ApiError::internal(e.to_string()))?;
        }
        let mut writer = TraceWriter::create(&path, &trace.header).map_err(|e| ApiError::internal(e.to_string()))?;
        for event in &trace.events {
            writer.append_event(event).map_err(|e| ApiError::internal(e.to_string()))?;
        }
        let live = Live { trace: Some(trace), state, client, writer };
        let v = view(&live, &app.env);
        app.sessions.write().expect("session table lock").insert(id.0, Arc::new(Mutex::new(live)));
        tracing::info!(session = %v.session_id, model = %v.model_id, "session started");
        return Ok(v);
    }
}

async fn get_state(State(app): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Json<StateView>, ApiError> {
    let cell = app.session(&id)?;
    let live = cell.lock().expect("session lock");
    Ok(Json(view(&live, &app.env)))
}

async fn post_action(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
    Json(req): Json<ActionRequest>,
) -> Result<Json<ActionResponse>, ApiError> {
    apply(app, id, req).await
}

async fn post_survey(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
    Json(submission): Json<SurveySubmission>,
) -> Result<Json<ActionResponse>, ApiError> {
    let req = ActionRequest {
        kind: ActionKind::SubmitSurvey,
        target_field: None,
        payload: Some(Payload::Survey(submission)),
        expected_version: None,
    };
    apply(app, id, req).await
}

async fn apply(app: Arc<AppState>, id: String, req: ActionRequest) -> Result<Json<ActionResponse>, ApiError> {
    let cell = app.session(&id)?;
    tokio::task::spawn_blocking(move || {
        let mut live = cell.lock().expect("session lock");
        let version = live.trace().events.len() as u64;
        if let Some(expected) = req.expected_version {
            if expected != version {
                let mut err =
                    ApiError::new(StatusCode::CONFLICT, format!("state version is {version}, not {expected}"));
                err.state = Some(view(&live, &app.env));
                return Err(err);
            }
        }
        let action =
            UserAction { kind: req.kind, target_field: req.target_field, payload: req.payload, timestamp: app.clock.now_ms() };
        let result = live.with_session(&app.env, |s| s.apply(action))?;
        let state = view(&live, &app.env);
        let events_appended = result.events.len();
        match &result.outcome {
            ActionOutcome::Applied => Ok(Json(ActionResponse { outcome: result.outcome, events_appended, state })),
            ActionOutcome::Rejected { reason } => Err(ApiError {
                status: StatusCode::UNPROCESSABLE_ENTITY,
                message: reason.clone(),
                state: Some(state),
            }),
            ActionOutcome::Failed { reason } => {
                Err(ApiError { status: StatusCode::BAD_GATEWAY, message: reason.clone(), state: Some(state) })
            }
        }
    })
    .await
    .map_err(|e| ApiError::internal(e.to_string()))?
}

async fn get_trace(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> Result<Json<InteractionTrace>, ApiError> {
    let cell = app.session(&id)?;
    let live = cell.lock().expect("session lock");
    if !live.state.is_ended() {
        return Err(ApiError::new(StatusCode::CONFLICT, "the session is still running"));
    }
    Ok(Json(live.trace().clone()))
}

/// Serves until ctrl-c.
pub async fn serve(app: Arc<AppState>, bind: &str) -> anyhow::Result<()> {
    let listener = tokio::net::TcpListener::bind(bind).await?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    let ticker = spawn_ticker(app.clone());
    axum::serve(listener, router(app))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    ticker.abort();
    Ok(())
}
