//! HTTP session service.
//!
//! Every session sits behind its own mutex, so requests for one session are
//! applied one at a time while different sessions proceed independently.
//! The response window opens when a trial is served and is measured on the
//! injected [`Clock`]; a choice arriving after it closes is stored as a
//! timeout.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Instant;

use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;
use wcst_core::agents::{Observation, ScriptedAgent, TrialPayload};
use wcst_core::render::render_trial;
use wcst_core::task::{Choice, SessionConfig, SessionState, TaskError};

use crate::seeds::derive_seed;

/// Monotonic seconds since an arbitrary origin.
pub trait Clock: Send + Sync {
    fn now_s(&self) -> f64;
}

pub struct MonotonicClock(Instant);

impl Default for MonotonicClock {
    fn default() -> Self {
        MonotonicClock(Instant::now())
    }
}

impl Clock for MonotonicClock {
    fn now_s(&self) -> f64 {
        self.0.elapsed().as_secs_f64()
    }
}

/// Clock moved by hand, for timing tests.
#[derive(Default)]
pub struct ManualClock(Mutex<f64>);

impl ManualClock {
    pub fn advance(&self, dt: f64) {
        *self.0.lock().unwrap() += dt;
    }
}

impl Clock for ManualClock {
    fn now_s(&self) -> f64 {
        *self.0.lock().unwrap()
    }
}

struct Slot {
    state: SessionState,
    served_at: Option<f64>,
}

pub struct AppState {
    sessions: Mutex<HashMap<String, Arc<Mutex<Slot>>>>,
    clock: Arc<dyn Clock>,
    defaults: SessionConfig,
    counter: AtomicU64,
}

impl AppState {
    /// `defaults` fills fields a client omits; its seed is the base from
    /// which seeds of sessions created without one are derived.
    pub fn new(defaults: SessionConfig, clock: Arc<dyn Clock>) -> Arc<Self> {
        Arc::new(AppState {
            sessions: Mutex::new(HashMap::new()),
            clock,
            defaults,
            counter: AtomicU64::new(0),
        })
    }

    fn slot(&self, id: &str) -> Result<Arc<Mutex<Slot>>, ApiError> {
        self.sessions
            .lock()
            .unwrap()
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError(StatusCode::NOT_FOUND, format!("no session {id:?}")))
    }
}

struct ApiError(StatusCode, String);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(json!({ "error": self.1 }))).into_response()
    }
}

impl From<TaskError> for ApiError {
    fn from(e: TaskError) -> Self {
        let code = match e {
            TaskError::Config(_) => StatusCode::BAD_REQUEST,
            _ => StatusCode::CONFLICT,
        };
        ApiError(code, e.to_string())
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateRequest {
    #[serde(default)]
    pub seed: Option<u64>,
    /// Partial session config; missing fields come from the service
    /// defaults.
    #[serde(default)]
    pub config: Option<serde_json::Value>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CreateResponse {
    pub session_id: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChoiceRequest {
    /// One-based key, `null` for an explicit timeout.
    pub choice: Option<u8>,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct ChoiceResponse {
    pub correct: bool,
    pub feedback: String,
    /// True when the choice arrived after the response window.
    pub timed_out: bool,
}

fn merged_config(defaults: &SessionConfig, patch: Option<serde_json::Value>) -> Result<SessionConfig, ApiError> {
    let Some(patch) = patch else { return Ok(defaults.clone()) };
    let serde_json::Value::Object(fields) = patch else {
        return Err(ApiError(StatusCode::BAD_REQUEST, "config must be an object".into()));
    };
    let mut base = serde_json::to_value(defaults).expect("config serializes");
    base.as_object_mut().expect("config is an object").extend(fields);
    serde_json::from_value(base).map_err(|e| ApiError(StatusCode::BAD_REQUEST, format!("config: {e}")))
}

async fn create_session(
    State(app): State<Arc<AppState>>,
    body: Option<Json<CreateRequest>>,
) -> Result<(StatusCode, Json<CreateResponse>), ApiError> {
    let req = body.map(|Json(r)| r).unwrap_or_default();
    let n = app.counter.fetch_add(1, Ordering::SeqCst) + 1;
    let mut config = merged_config(&app.defaults, req.config)?;
    config.seed = req.seed.unwrap_or_else(|| derive_seed(app.defaults.seed, n));
    let id = format!("s{n:04}");
    let state = SessionState::new(config)?.with_session_id(id.clone());
    app.sessions
        .lock()
        .unwrap()
        .insert(id.clone(), Arc::new(Mutex::new(Slot { state, served_at: None })));
    Ok((StatusCode::CREATED, Json(CreateResponse { session_id: id })))
}

fn finished(id: &str) -> ApiError {
    ApiError(StatusCode::CONFLICT, format!("session {id} is finished"))
}

async fn get_trial(State(app): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Json<TrialPayload>, ApiError> {
    let slot = app.slot(&id)?;
    let mut s = slot.lock().unwrap();
    if s.state.is_finished() {
        return Err(finished(&id));
    }
    let spec = match s.state.pending() {
        Some(p) => p.clone(),
        None => {
            let spec = s.state.next_trial()?;
            s.served_at = Some(app.clock.now_s());
            spec
        }
    };
    Ok(Json(TrialPayload::from(&Observation::from_session(&s.state, &spec))))
}

async fn post_choice(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
    Json(req): Json<ChoiceRequest>,
) -> Result<Json<ChoiceResponse>, ApiError> {
    let now = app.clock.now_s();
    let slot = app.slot(&id)?;
    let mut s = slot.lock().unwrap();
    if s.state.is_finished() {
        return Err(finished(&id));
    }
    let served = match (s.state.pending(), s.served_at) {
        (Some(_), Some(t)) => t,
        _ => return Err(ApiError(StatusCode::CONFLICT, "no trial pending; fetch one first".into())),
    };
    if let Some(k) = req.choice {
        if !(1..=4).contains(&k) {
            return Err(ApiError(StatusCode::UNPROCESSABLE_ENTITY, format!("choice {k} outside 1-4")));
        }
    }
    let window = s.state.config().response_window;
    let rt = (now - served).max(0.0);
    let (choice, timed_out) = match req.choice {
        Some(k) if rt <= window => (Choice::Key(k), false),
        _ => (Choice::Timeout, true),
    };
    let record = s.state.submit_choice(choice, rt.min(window))?;
    s.served_at = None;
    Ok(Json(ChoiceResponse {
        correct: record.correct,
        feedback: if record.correct { "Correct" } else { "Incorrect" }.into(),
        timed_out,
    }))
}

async fn get_log(State(app): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let slot = app.slot(&id)?;
    let body = slot.lock().unwrap().state.export_log();
    Ok(([(header::CONTENT_TYPE, "application/x-ndjson")], body).into_response())
}

async fn get_render(State(app): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let slot = app.slot(&id)?;
    let s = slot.lock().unwrap();
    let spec = s
        .state
        .pending()
        .ok_or_else(|| ApiError(StatusCode::CONFLICT, "no trial pending".into()))?;
    let svg = render_trial(&spec.key_cards, &spec.stimulus);
    Ok(([(header::CONTENT_TYPE, "image/svg+xml")], svg).into_response())
}

pub fn router(app: Arc<AppState>) -> Router {
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}/trial", get(get_trial))
        .route("/sessions/{id}/choice", post(post_choice))
        .route("/sessions/{id}/log", get(get_log))
        .route("/sessions/{id}/render.svg", get(get_render))
        .with_state(app)
}

/// Remote-agent endpoint answering each trial from a fixed choice script,
/// exactly as the in-process scripted agent would.
pub fn scripted_agent_router(choices: Vec<u8>) -> Router {
    let choices = Arc::new(choices);
    Router::new().route(
        "/",
        post(move |Json(p): Json<TrialPayload>| {
            let choices = Arc::clone(&choices);
            async move { Json(json!({ "choice": ScriptedAgent::choice_at(&choices, p.trial_index) })) }
        }),
    )
}

/// Serves until the process exits.
pub async fn serve(bind: &str, app: Router) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(bind).await?;
    axum::serve(listener, app).await
}

/// A router served from a background thread; dropped handles stop it.
pub struct Background {
    pub addr: SocketAddr,
    shutdown: Option<tokio::sync::oneshot::Sender<()>>,
    thread: Option<std::thread::JoinHandle<()>>,
}

impl Background {
    pub fn spawn(app: Router) -> std::io::Result<Self> {
        let rt = tokio::runtime::Builder::new_multi_thread()
            .worker_threads(2)
            .enable_all()
            .build()?;
        let listener = rt.block_on(tokio::net::TcpListener::bind("127.0.0.1:0"))?;
        let addr = listener.local_addr()?;
        let (tx, rx) = tokio::sync::oneshot::channel::<()>();
        let thread = std::thread::spawn(move || {
            rt.block_on(async move {
                let _ = axum::serve(listener, app)
                    .with_graceful_shutdown(async {
                        let _ = rx.await;
                    })
                    .await;
            });
        });
        Ok(Background { addr, shutdown: Some(tx), thread: Some(thread) })
    }

    pub fn url(&self, path: &str) -> String {
        format!("http://{}{}", self.addr, path)
    }
}

impl Drop for Background {
    fn drop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}
