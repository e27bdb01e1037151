//! HTTP facade: catalog completion, spec validation, session ingestion and
//! report retrieval.
//!
//! | route | result |
//! |---|---|
//! | `GET /catalog/complete?prefix=P` | JSON array of display names |
//! | `POST /spec/validate` | JSON array of findings |
//! | `POST /session[?seed=N]` | `{"sessionId": ...}` |
//! | `POST /session/{id}/events` | JSONL body; `{"accepted", "alerts", "violations"}` |
//! | `POST /session/{id}/end` | the session report |
//! | `GET /session/{id}/report` | the session report |
//! | `GET /session/{id}/snapshots/{name}` | snapshot file |
//!
//! Each session holds its own lock, so events of one session are applied
//! in arrival order while sessions proceed independently. With a log
//! directory every accepted event is appended to `<id>.jsonl` (trajectory
//! format) next to `<id>.spec.json`, and [`AppState::recover`] rebuilds the
//! sessions from those files.

use std::collections::HashMap;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::SystemTime;

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;
use tokio::sync::{Mutex, RwLock};

use crate::catalog::Catalog;
use crate::harness::{parse_trajectory, InputError, SessionRun, TrajectoryHeader};
use crate::model::{SessionReport, SimEvent, Violation};
use crate::monitor::{ImmediateAlert, MonitorError, MonitorOutput};
use crate::report::{is_snapshot_name, session_id};
use crate::specparse::{check_document, parse_spec, SpecDocument};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub enum SessionStatus {
    Open,
    Finalized,
}

pub struct Session {
    pub run: SessionRun,
    pub status: SessionStatus,
    pub created_at: SystemTime,
    report: Option<SessionReport>,
}

pub struct AppState {
    catalog: Arc<Catalog>,
    out_dir: PathBuf,
    log_dir: Option<PathBuf>,
    sessions: RwLock<HashMap<String, Arc<Mutex<Session>>>>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct IngestResponse {
    pub accepted: usize,
    /// Alerts raised by this batch.
    pub alerts: Vec<ImmediateAlert>,
    /// Every violation of the session so far.
    pub violations: Vec<Violation>,
}

struct ApiError(StatusCode, serde_json::Value);

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        ApiError(status, json!({ "error": message.into() }))
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(self.1)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

fn spec_from_body(body: &[u8]) -> ApiResult<SpecDocument> {
    serde_json::from_slice(body)
        .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, format!("not a spec document: {e}")))
}

fn monitor_status(e: &MonitorError) -> StatusCode {
    match e {
        MonitorError::AfterEnd { .. } => StatusCode::CONFLICT,
        _ => StatusCode::UNPROCESSABLE_ENTITY,
    }
}

impl AppState {
    pub fn new(catalog: Catalog, out_dir: PathBuf, log_dir: Option<PathBuf>) -> Arc<Self> {
        Arc::new(Self {
            catalog: Arc::new(catalog),
            out_dir,
            log_dir,
            sessions: RwLock::new(HashMap::new()),
        })
    }

    pub fn out_dir(&self) -> &Path {
        &self.out_dir
    }

    async fn session(&self, id: &str) -> ApiResult<Arc<Mutex<Session>>> {
        self.sessions
            .read()
            .await
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, format!("unknown session '{id}'")))
    }

    fn log_path(&self, id: &str, suffix: &str) -> Option<PathBuf> {
        self.log_dir.as_ref().map(|d| d.join(format!("{id}{suffix}")))
    }

    fn append_log(&self, id: &str, events: &[SimEvent]) -> std::io::Result<()> {
        let Some(path) = self.log_path(id, ".jsonl") else {
            return Ok(());
        };
        let mut f = fs::OpenOptions::new().append(true).open(path)?;
        let mut buf = String::new();
        for e in events {
            buf.push_str(&serde_json::to_string(e).map_err(std::io::Error::other)?);
            buf.push('\n');
        }
        f.write_all(buf.as_bytes())?;
        f.sync_data()
    }

    /// Rebuilds sessions from the event log directory. Sessions whose report
    /// already exists come back finalized. Returns the recovered ids.
    pub async fn recover(&self) -> Result<Vec<String>, InputError> {
        let Some(dir) = &self.log_dir else {
            return Ok(Vec::new());
        };
        let mut ids = Vec::new();
        let entries = fs::read_dir(dir).map_err(|source| InputError::Io {
            path: dir.clone(),
            source,
        })?;
        let mut specs: Vec<PathBuf> = entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.to_string_lossy().ends_with(".spec.json"))
            .collect();
        specs.sort();
        for spec_path in specs {
            let name = spec_path.file_name().unwrap().to_string_lossy().to_string();
            let id = name.trim_end_matches(".spec.json").to_string();
            let read = |p: &Path| {
                fs::read_to_string(p).map_err(|source| InputError::Io {
                    path: p.to_path_buf(),
                    source,
                })
            };
            let doc: SpecDocument =
                serde_json::from_str(&read(&spec_path)?).map_err(|e| InputError::Spec {
                    path: spec_path.clone(),
                    findings: vec![crate::model::Finding {
                        step: None,
                        field: None,
                        position: None,
                        message: e.to_string(),
                    }],
                })?;
            let spec = parse_spec(&doc, &self.catalog).map_err(|findings| InputError::Spec {
                path: spec_path.clone(),
                findings,
            })?;
            let mut run = SessionRun::start(spec, &self.catalog, id.clone())?;
            let (trajectory, lines) = parse_trajectory(&read(&dir.join(format!("{id}.jsonl")))?)?;
            for (e, line) in trajectory.events.iter().zip(lines) {
                run.apply(e)
                    .map_err(|source| InputError::Event { line, source })?;
            }
            let report_path = self.out_dir.join(&id).join("report.json");
            let report = fs::read_to_string(&report_path)
                .ok()
                .and_then(|s| serde_json::from_str::<SessionReport>(&s).ok());
            let session = Session {
                run,
                status: if report.is_some() {
                    SessionStatus::Finalized
                } else {
                    SessionStatus::Open
                },
                created_at: SystemTime::now(),
                report,
            };
            self.sessions
                .write()
                .await
                .insert(id.clone(), Arc::new(Mutex::new(session)));
            ids.push(id);
        }
        Ok(ids)
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/catalog/complete", get(complete))
        .route("/spec/validate", post(validate))
        .route("/session", post(create_session))
        .route("/session/{id}/events", post(post_events))
        .route("/session/{id}/end", post(end_session))
        .route("/session/{id}/report", get(get_report))
        .route("/session/{id}/snapshots/{name}", get(get_snapshot))
        .with_state(state)
}

/// Serves until the listener fails.
pub async fn serve(listener: tokio::net::TcpListener, state: Arc<AppState>) -> std::io::Result<()> {
    axum::serve(listener, router(state)).await
}

async fn complete(
    State(st): State<Arc<AppState>>,
    Query(q): Query<HashMap<String, String>>,
) -> ApiResult<Json<Vec<String>>> {
    let prefix = q
        .get("prefix")
        .ok_or_else(|| ApiError::new(StatusCode::BAD_REQUEST, "missing 'prefix' parameter"))?;
    Ok(Json(st.catalog.complete(prefix)))
}

async fn validate(State(st): State<Arc<AppState>>, body: Bytes) -> ApiResult<Response> {
    let doc = spec_from_body(&body)?;
    Ok(Json(check_document(&doc, &st.catalog)).into_response())
}

#[derive(Deserialize)]
struct CreateParams {
    seed: Option<u64>,
}

async fn create_session(
    State(st): State<Arc<AppState>>,
    Query(params): Query<CreateParams>,
    body: Bytes,
) -> ApiResult<Response> {
    let doc = spec_from_body(&body)?;
    let findings = check_document(&doc, &st.catalog);
    if !findings.is_empty() {
        return Err(ApiError(
            StatusCode::UNPROCESSABLE_ENTITY,
            json!({ "error": "spec has findings", "findings": findings }),
        ));
    }
    let spec = parse_spec(&doc, &st.catalog).map_err(|findings| {
        ApiError(
            StatusCode::UNPROCESSABLE_ENTITY,
            json!({ "error": "spec has findings", "findings": findings }),
        )
    })?;
    let id = session_id(params.seed);
    let run = SessionRun::start(spec, &st.catalog, id.clone())
        .map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, e.to_string()))?;

    let mut sessions = st.sessions.write().await;
    if sessions.contains_key(&id) {
        return Err(ApiError::new(
            StatusCode::CONFLICT,
            format!("session '{id}' already exists"),
        ));
    }
    if let (Some(spec_path), Some(log_path)) =
        (st.log_path(&id, ".spec.json"), st.log_path(&id, ".jsonl"))
    {
        let header = TrajectoryHeader {
            spec_ref: format!("{id}.spec.json"),
            catalog_ref: doc.catalog.clone(),
            session_seed: params.seed,
        };
        let io = |e: std::io::Error| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string());
        fs::write(&spec_path, serde_json::to_vec_pretty(&doc).unwrap()).map_err(io)?;
        fs::write(&log_path, serde_json::to_string(&header).unwrap() + "\n").map_err(io)?;
    }
    sessions.insert(
        id.clone(),
        Arc::new(Mutex::new(Session {
            run,
            status: SessionStatus::Open,
            created_at: SystemTime::now(),
            report: None,
        })),
    );
    Ok((StatusCode::CREATED, Json(json!({ "sessionId": id }))).into_response())
}

async fn post_events(
    State(st): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    body: Bytes,
) -> ApiResult<Json<IngestResponse>> {
    let session = st.session(&id).await?;
    let text = std::str::from_utf8(&body)
        .map_err(|_| ApiError::new(StatusCode::BAD_REQUEST, "body is not UTF-8"))?;
    let mut events = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let e: SimEvent = serde_json::from_str(line).map_err(|e| {
            ApiError::new(StatusCode::BAD_REQUEST, format!("line {}: {e}", i + 1))
        })?;
        events.push(e);
    }

    let mut s = session.lock().await;
    if s.status == SessionStatus::Finalized {
        return Err(ApiError::new(StatusCode::CONFLICT, "session is finalized"));
    }
    // Apply to a copy so a rejected batch leaves the session untouched.
    let mut trial = s.run.monitors.clone();
    let mut alerts = Vec::new();
    for (i, e) in events.iter().enumerate() {
        let out = trial.step(e).map_err(|err| {
            ApiError(
                monitor_status(&err),
                json!({ "error": err.to_string(), "event": i }),
            )
        })?;
        alerts.extend(out.into_iter().filter_map(|o| match o {
            MonitorOutput::Alert(a) => Some(a),
            MonitorOutput::Violation(_) => None,
        }));
    }
    st.append_log(&id, &events)
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?;
    s.run.monitors = trial;
    Ok(Json(IngestResponse {
        accepted: events.len(),
        alerts,
        violations: s.run.monitors.violations(),
    }))
}

async fn end_session(
    State(st): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
) -> ApiResult<Json<SessionReport>> {
    let session = st.session(&id).await?;
    let mut s = session.lock().await;
    if let Some(r) = &s.report {
        return Ok(Json(r.clone()));
    }
    let report = s
        .run
        .finish(&st.out_dir)
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?;
    s.status = SessionStatus::Finalized;
    s.report = Some(report.clone());
    Ok(Json(report))
}

async fn get_report(
    State(st): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
) -> ApiResult<Json<SessionReport>> {
    let session = st.session(&id).await?;
    let s = session.lock().await;
    s.report
        .clone()
        .map(Json)
        .ok_or_else(|| ApiError::new(StatusCode::CONFLICT, "session is still open"))
}

async fn get_snapshot(
    State(st): State<Arc<AppState>>,
    UrlPath((id, name)): UrlPath<(String, String)>,
) -> ApiResult<Response> {
    let session = st.session(&id).await?;
    let dir = {
        let s = session.lock().await;
        match &s.report {
            Some(r) => st.out_dir.join(&r.snapshot_dir),
            None => return Err(ApiError::new(StatusCode::NOT_FOUND, "no snapshots yet")),
        }
    };
    if !is_snapshot_name(&name) {
        return Err(ApiError::new(StatusCode::NOT_FOUND, format!("no snapshot '{name}'")));
    }
    let bytes = tokio::fs::read(dir.join(&name))
        .await
        .map_err(|_| ApiError::new(StatusCode::NOT_FOUND, format!("no snapshot '{name}'")))?;
    let content_type = if name.ends_with(".svg") {
        "image/svg+xml"
    } else {
        "application/json"
    };
    Ok(([(header::CONTENT_TYPE, content_type)], bytes).into_response())
}
