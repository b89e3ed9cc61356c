//! Job service: each job is one pipeline run in its own directory, driven
//! by a worker thread and observed through manifest snapshots.

use std::collections::HashMap;
use std::path::{Component, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{mpsc, Arc, Mutex};

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Multipart, Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use flatlift_core::model::{decode_image, ContentHash};
use flatlift_core::pipeline::{Pipeline, PipelineConfig, RunManifest, RunOptions, INPUT_FILE, MANIFEST_FILE};
use flatlift_core::Error;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

/// Uploads above this size are refused.
pub const MAX_UPLOAD_BYTES: usize = 20 * 1024 * 1024;

/// Config keys a job request may not set: they reach the server's
/// filesystem and network.
const RESTRICTED_KEYS: [&str; 2] = ["backends", "cache_dir"];

/// Ordered; a job only ever moves forward, or to `Failed`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum JobStatus {
    Queued,
    ConditionsReady,
    CandidatesReady,
    AwaitingSelection,
    ShapeReady,
    Done,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobState {
    pub job_id: ContentHash,
    pub status: JobStatus,
    pub interactive: bool,
    pub awaiting_selection: bool,
    /// Heuristic pick offered while awaiting a selection, 1-based.
    pub suggested_index: Option<usize>,
    pub manifest: Option<RunManifest>,
    pub error: Option<String>,
}

impl JobState {
    fn advance(&mut self, status: JobStatus) {
        if self.status != JobStatus::Failed && status > self.status {
            self.status = status;
        }
    }

    fn observe(&mut self, m: &RunManifest) {
        let status = if m.complete {
            JobStatus::Done
        } else {
            match m.stages.last().map(|s| s.name.as_str()) {
                Some("conditions" | "caption") => JobStatus::ConditionsReady,
                Some("candidates" | "select") => JobStatus::CandidatesReady,
                Some("shape" | "bake") => JobStatus::ShapeReady,
                _ => JobStatus::Queued,
            }
        };
        // completion is reported by the worker once the run returns
        self.advance(status.min(JobStatus::ShapeReady));
        self.manifest = Some(m.clone());
    }
}

struct Job {
    run_dir: PathBuf,
    state: Mutex<JobState>,
    select: Mutex<Option<mpsc::Sender<usize>>>,
}

pub struct AppState {
    base: PipelineConfig,
    data_dir: PathBuf,
    jobs: Mutex<HashMap<String, Arc<Job>>>,
    nonce: AtomicU64,
}

impl AppState {
    pub fn new(base: PipelineConfig, data_dir: PathBuf) -> Arc<Self> {
        Arc::new(Self {
            base,
            data_dir,
            jobs: Mutex::new(HashMap::new()),
            nonce: AtomicU64::new(rand::random()),
        })
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/api/health", get(|| async { Json(json!({ "ok": true })) }))
        .route("/api/jobs", post(create_job))
        .route("/api/jobs/:id", get(get_job))
        .route("/api/jobs/:id/artifact/*name", get(get_artifact))
        .route("/api/jobs/:id/select", post(select))
        .layer(DefaultBodyLimit::max(MAX_UPLOAD_BYTES + 64 * 1024))
        .with_state(state)
}

#[derive(Debug)]
struct ApiError(StatusCode, String);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(json!({ "error": self.1 }))).into_response()
    }
}

fn bad_request(msg: impl Into<String>) -> ApiError {
    ApiError(StatusCode::BAD_REQUEST, msg.into())
}

fn not_found(msg: impl Into<String>) -> ApiError {
    ApiError(StatusCode::NOT_FOUND, msg.into())
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CreatedJob {
    pub job_id: ContentHash,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SelectRequest {
    pub index: usize,
}

/// Overlays `patch` onto `base`, recursing into objects.
fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                merge(b.entry(k).or_insert(Value::Null), v);
            }
        }
        (b, p) => *b = p,
    }
}

/// Job configuration from the request's optional JSON object, on top of the
/// server's base configuration. Returns the config and the interactive flag.
fn job_config(base: &PipelineConfig, text: Option<&str>, interactive_field: Option<bool>) -> Result<(PipelineConfig, bool), ApiError> {
    let mut interactive = interactive_field.unwrap_or(false);
    let mut value = serde_json::to_value(base).expect("config serializes");
    if let Some(text) = text.filter(|t| !t.trim().is_empty()) {
        let mut patch: Value = serde_json::from_str(text).map_err(|e| bad_request(format!("config is not JSON: {e}")))?;
        let obj = patch.as_object_mut().ok_or_else(|| bad_request("config must be a JSON object"))?;
        if let Some(flag) = obj.remove("interactive") {
            interactive = flag.as_bool().ok_or_else(|| bad_request("interactive must be a boolean"))?;
        }
        if let Some(key) = RESTRICTED_KEYS.iter().find(|k| obj.contains_key(**k)) {
            return Err(bad_request(format!("config key {key:?} cannot be set per job")));
        }
        merge(&mut value, patch);
    }
    let cfg: PipelineConfig = serde_json::from_value(value).map_err(|e| bad_request(format!("invalid config: {e}")))?;
    cfg.validate().map_err(|e| bad_request(e.to_string()))?;
    Ok((cfg, interactive))
}

async fn create_job(State(app): State<Arc<AppState>>, mut multipart: Multipart) -> Result<(StatusCode, Json<CreatedJob>), ApiError> {
    let mut image: Option<Bytes> = None;
    let mut config: Option<String> = None;
    let mut interactive: Option<bool> = None;
    while let Some(field) = multipart.next_field().await.map_err(|e| bad_request(e.to_string()))? {
        match field.name().unwrap_or_default() {
            "image" | "file" => image = Some(field.bytes().await.map_err(|e| bad_request(e.to_string()))?),
            "config" => config = Some(field.text().await.map_err(|e| bad_request(e.to_string()))?),
            "interactive" => {
                let text = field.text().await.map_err(|e| bad_request(e.to_string()))?;
                interactive = Some(match text.trim() {
                    "true" | "1" => true,
                    "false" | "0" | "" => false,
                    other => return Err(bad_request(format!("interactive must be true or false, got {other:?}"))),
                });
            }
            other => return Err(bad_request(format!("unexpected field {other:?}"))),
        }
    }
    let image = image.ok_or_else(|| bad_request("missing image field"))?;
    if image.len() > MAX_UPLOAD_BYTES {
        return Err(bad_request("image exceeds 20 MB"));
    }
    decode_image(&image).map_err(|e| bad_request(e.to_string()))?;
    let (cfg, interactive) = job_config(&app.base, config.as_deref(), interactive)?;

    let fingerprint = cfg.fingerprint();
    let job_id = if interactive {
        let nonce = app.nonce.fetch_add(1, Ordering::Relaxed).to_le_bytes();
        ContentHash::of_parts([&image[..], fingerprint.as_bytes(), b"interactive", &nonce])
    } else {
        ContentHash::of_parts([&image[..], fingerprint.as_bytes()])
    };
    let key = job_id.to_hex();

    let (tx, rx) = mpsc::channel();
    let job = {
        let mut jobs = app.jobs.lock().unwrap();
        if jobs.contains_key(&key) {
            return Ok((StatusCode::OK, Json(CreatedJob { job_id })));
        }
        let job = Arc::new(Job {
            run_dir: app.data_dir.join(&key),
            state: Mutex::new(JobState {
                job_id,
                status: JobStatus::Queued,
                interactive,
                awaiting_selection: false,
                suggested_index: None,
                manifest: None,
                error: None,
            }),
            select: Mutex::new(interactive.then_some(tx)),
        });
        jobs.insert(key, job.clone());
        job
    };
    tokio::task::spawn_blocking(move || work(&job, cfg, &image, rx));
    Ok((StatusCode::ACCEPTED, Json(CreatedJob { job_id })))
}

fn work(job: &Job, cfg: PipelineConfig, input: &[u8], rx: mpsc::Receiver<usize>) {
    let interactive = job.state.lock().unwrap().interactive;
    let result = run_job(job, cfg, input, interactive, rx);
    let mut st = job.state.lock().unwrap();
    st.awaiting_selection = false;
    match result {
        Ok(m) => {
            st.manifest = Some(m);
            st.advance(JobStatus::Done);
        }
        Err(e) => {
            tracing::warn!("job {} failed: {e}", st.job_id.short());
            st.error = Some(e.to_string());
            st.status = JobStatus::Failed;
        }
    }
}

fn run_job(job: &Job, cfg: PipelineConfig, input: &[u8], interactive: bool, rx: mpsc::Receiver<usize>) -> flatlift_core::Result<RunManifest> {
    let pipeline = Pipeline::new(cfg)?;
    let observe = |m: &RunManifest| job.state.lock().unwrap().observe(m);
    if !interactive {
        let opts = RunOptions { observer: Some(&observe), ..Default::default() };
        return pipeline.run(input, &job.run_dir, &opts);
    }
    let pause = RunOptions {
        stop_after: Some("candidates"),
        observer: Some(&observe),
        ..Default::default()
    };
    match pipeline.run(input, &job.run_dir, &pause) {
        Err(Error::Interrupted(_)) => {}
        other => return other,
    }
    let suggestion = pipeline.suggest(&job.run_dir).ok();
    {
        let mut st = job.state.lock().unwrap();
        st.suggested_index = suggestion;
        st.awaiting_selection = true;
        st.advance(JobStatus::AwaitingSelection);
    }
    let index = rx
        .recv()
        .map_err(|_| Error::Interrupted("candidates (selection abandoned)".into()))?;
    let opts = RunOptions {
        override_index: Some(index),
        observer: Some(&observe),
        ..Default::default()
    };
    pipeline.resume(&job.run_dir, &opts)
}

fn find(app: &AppState, id: &str) -> Result<Arc<Job>, ApiError> {
    app.jobs
        .lock()
        .unwrap()
        .get(id)
        .cloned()
        .ok_or_else(|| not_found(format!("unknown job {id}")))
}

async fn get_job(State(app): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Json<JobState>, ApiError> {
    let job = find(&app, &id)?;
    let st = job.state.lock().unwrap().clone();
    Ok(Json(st))
}

/// Artifact names are limited to files the run manifest lists.
fn servable(m: Option<&RunManifest>, name: &str) -> bool {
    let relative = std::path::Path::new(name).components().all(|c| matches!(c, Component::Normal(_)));
    if !relative || name.is_empty() {
        return false;
    }
    name == MANIFEST_FILE
        || name == INPUT_FILE
        || m.is_some_and(|m| m.stages.iter().any(|s| s.output_hashes.contains_key(name)))
}

async fn get_artifact(State(app): State<Arc<AppState>>, Path((id, name)): Path<(String, String)>) -> Result<Response, ApiError> {
    let job = find(&app, &id)?;
    let snapshot = job.state.lock().unwrap().manifest.clone();
    if !servable(snapshot.as_ref(), &name) {
        return Err(not_found(format!("no artifact {name:?}")));
    }
    let path = job.run_dir.join(&name);
    let bytes = tokio::fs::read(&path).await.map_err(|_| not_found(format!("no artifact {name:?}")))?;
    let mime = match path.extension().and_then(|e| e.to_str()) {
        Some("png") => "image/png",
        Some("json") => "application/json",
        Some("ply") => "application/octet-stream",
        _ => "application/octet-stream",
    };
    Ok(([(header::CONTENT_TYPE, mime)], bytes).into_response())
}

async fn select(State(app): State<Arc<AppState>>, Path(id): Path<String>, body: Bytes) -> Result<(StatusCode, Json<JobState>), ApiError> {
    let job = find(&app, &id)?;
    let req: SelectRequest = serde_json::from_slice(&body).map_err(|e| bad_request(format!("expected {{\"index\": n}}: {e}")))?;
    let mut st = job.state.lock().unwrap();
    if !st.awaiting_selection {
        return Err(ApiError(StatusCode::CONFLICT, format!("job is {:?}, not awaiting a selection", st.status)));
    }
    let count = st.manifest.as_ref().map_or(0, |m| m.candidates.len());
    if !(1..=count).contains(&req.index) {
        return Err(bad_request(format!("index {} out of range 1..={count}", req.index)));
    }
    let tx = job.select.lock().unwrap().take();
    match tx.map(|tx| tx.send(req.index)) {
        Some(Ok(())) => {
            st.awaiting_selection = false;
            Ok((StatusCode::ACCEPTED, Json(st.clone())))
        }
        _ => Err(ApiError(StatusCode::CONFLICT, "selection already made".into())),
    }
}
