//! JSON API over the tutorial engine: create projects from transcripts, run
//! the five stages, apply edits and read the tutorial preview.

pub mod error;
pub mod settings;
pub mod store;

use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::{json, Value};
use stepwise_core::document::{Edit, TutorialDocument, STAGE_COUNT};
use stepwise_core::extraction::GenerationProvider;
use stepwise_core::localization::DetectorProvider;
use stepwise_core::pipeline::{check_prerequisites, run_stage, StageContext, StageReport};
use stepwise_core::shots::{detect_boundaries, select_thumbnails, ShotError, DEFAULT_THRESHOLD};
use stepwise_core::transcript::{estimate_duration, parse_transcript, TranscriptError, TranscriptFormat};
use tower_http::cors::{Any, CorsLayer};
use tower_http::trace::TraceLayer;

pub use error::ApiError;
pub use settings::Settings;
pub use store::{JobState, Project, ProjectStore};

/// Shared server state.
pub struct AppState {
    pub settings: Settings,
    pub store: ProjectStore,
    provider: Arc<dyn GenerationProvider>,
    /// Replaces the configured detector for every project when set.
    detector: Option<Arc<dyn DetectorProvider>>,
}

impl AppState {
    /// State with the provider and detector described by `settings`.
    pub fn from_settings(settings: Settings) -> Result<Self, ApiError> {
        let provider = settings.build_provider()?;
        let store = ProjectStore::open(settings.data_dir.clone()).map_err(|e| ApiError::Internal(e.to_string()))?;
        Ok(Self {
            settings,
            store,
            provider,
            detector: None,
        })
    }

    /// State with explicit providers and an in-memory store.
    pub fn with_providers(
        settings: Settings,
        provider: Arc<dyn GenerationProvider>,
        detector: Arc<dyn DetectorProvider>,
    ) -> Self {
        Self {
            store: ProjectStore::open(None).expect("in-memory store"),
            settings,
            provider,
            detector: Some(detector),
        }
    }

    fn frames_dir(&self, doc: &TutorialDocument) -> Option<std::path::PathBuf> {
        doc.frames_dir.as_deref().map(|d| self.settings.resolve_frames_dir(d))
    }

    fn detector_for(&self, doc: &TutorialDocument) -> Result<Arc<dyn DetectorProvider>, ApiError> {
        if let Some(d) = &self.detector {
            return Ok(d.clone());
        }
        let dir = self.frames_dir(doc).unwrap_or_default();
        Ok(self.settings.build_detector(&dir)?)
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    let cors = match state.settings.cors_origin.as_deref().map(HeaderValue::from_str) {
        Some(Ok(origin)) => CorsLayer::new().allow_origin(origin),
        _ => CorsLayer::new().allow_origin(Any),
    }
    .allow_methods(Any)
    .allow_headers(Any);

    Router::new()
        .route("/health", get(health))
        .route("/projects", post(create_project))
        .route("/projects/{id}", get(get_project))
        .route("/projects/{id}/stages/{n}", get(get_stage).put(put_stage))
        .route("/projects/{id}/stages/{n}/run", post(run_stage_handler))
        .route("/projects/{id}/preview", get(get_preview))
        .route("/projects/{id}/thumbnails", get(get_thumbnails))
        .layer(TraceLayer::new_for_http())
        .layer(cors)
        .with_state(state)
}

/// Binds `settings.bind` and serves until the process is stopped.
pub async fn serve(state: AppState) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(&state.settings.bind).await?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, router(Arc::new(state))).await
}

type AppResult<T> = Result<T, ApiError>;

async fn health() -> Json<Value> {
    Json(json!({ "status": "ok" }))
}

#[derive(Debug, Default, Deserialize)]
struct UploadOptions {
    #[serde(default)]
    format: Option<String>,
    #[serde(default)]
    duration_s: Option<f64>,
    #[serde(default)]
    video_id: Option<String>,
    #[serde(default)]
    frames_dir: Option<String>,
}

#[derive(Debug, Deserialize)]
struct UploadRequest {
    transcript: String,
    #[serde(flatten)]
    options: UploadOptions,
}

/// Accepts either a JSON body `{transcript, format?, duration_s?, video_id?,
/// frames_dir?}` or the raw transcript file with the options as query
/// parameters.
async fn create_project(
    State(app): State<Arc<AppState>>,
    Query(query): Query<UploadOptions>,
    headers: HeaderMap,
    body: Bytes,
) -> AppResult<Response> {
    let is_json = headers
        .get(header::CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|v| v.starts_with("application/json"));
    let (raw, options) = if is_json {
        let req: UploadRequest =
            serde_json::from_slice(&body).map_err(|e| ApiError::BadRequest(format!("invalid upload body: {e}")))?;
        (req.transcript, req.options)
    } else {
        let text = String::from_utf8(body.to_vec()).map_err(|_| TranscriptError::UnparsableTranscript)?;
        (text, query)
    };

    let format = match options.format.as_deref() {
        Some(f) => f.parse::<TranscriptFormat>()?,
        None => TranscriptFormat::Auto,
    };
    let duration = match options.duration_s {
        Some(d) if d.is_finite() && d > 0.0 => d,
        Some(d) => return Err(TranscriptError::InvalidDuration(d).into()),
        None => estimate_duration(&raw, format)?,
    };
    let video_id = options.video_id.unwrap_or_else(|| "video".to_string());
    let parsed = parse_transcript(&video_id, &raw, format, duration)?;
    if parsed.transcript.is_empty() {
        return Err(TranscriptError::UnparsableTranscript.into());
    }
    let dropped = parsed.dropped.len();
    let doc = TutorialDocument::new(parsed.transcript, options.frames_dir);
    let project = app.store.create(doc)?;
    tracing::info!(project = %project.id, dropped, "project created");
    let body = json!({
        "project_id": project.id,
        "created_at": project.created_at,
        "format": parsed.format,
        "dropped_cues": parsed.dropped,
        "document": *project.snapshot(),
    });
    Ok((StatusCode::CREATED, Json(body)).into_response())
}

async fn get_project(State(app): State<Arc<AppState>>, Path(id): Path<String>) -> AppResult<Json<Value>> {
    let project = app.store.get(&id)?;
    Ok(Json(json!({
        "project_id": project.id,
        "created_at": project.created_at,
        "document": *project.snapshot(),
    })))
}

fn check_stage(n: usize) -> AppResult<()> {
    if (1..=STAGE_COUNT).contains(&n) {
        Ok(())
    } else {
        Err(ApiError::StageNotFound(n))
    }
}

/// The part of the document a stage produces and edits.
pub fn stage_payload(doc: &TutorialDocument, stage: usize) -> Value {
    match stage {
        1 => json!({ "steps": doc.steps.iter().map(|s| &s.draft).collect::<Vec<_>>() }),
        2 => json!({
            "thumbnails": doc.steps.iter().enumerate()
                .map(|(i, s)| json!({ "step": i, "thumbnail": s.thumbnail }))
                .collect::<Vec<_>>()
        }),
        3 => json!({
            "objects": doc.objects.iter().map(|o| &o.name).collect::<Vec<_>>(),
            "step_objects": doc.steps.iter().map(|s| &s.objects).collect::<Vec<_>>(),
        }),
        4 => json!({ "objects": doc.objects }),
        _ => json!({ "edges": doc.edges }),
    }
}

fn stage_body(project: &Project, doc: &TutorialDocument, stage: usize) -> Value {
    json!({
        "stage": stage,
        "status": doc.stage(stage),
        "job": project.job(stage),
        "revision": doc.revision,
        "result": stage_payload(doc, stage),
    })
}

async fn get_stage(State(app): State<Arc<AppState>>, Path((id, n)): Path<(String, usize)>) -> AppResult<Json<Value>> {
    check_stage(n)?;
    let project = app.store.get(&id)?;
    Ok(Json(stage_body(&project, &project.snapshot(), n)))
}

#[derive(Debug, Deserialize)]
struct EditRequest {
    expected_revision: u64,
    edit: Edit,
}

async fn put_stage(
    State(app): State<Arc<AppState>>,
    Path((id, n)): Path<(String, usize)>,
    body: Bytes,
) -> AppResult<Json<Value>> {
    check_stage(n)?;
    let project = app.store.get(&id)?;
    let req: EditRequest =
        serde_json::from_slice(&body).map_err(|e| ApiError::BadRequest(format!("invalid edit body: {e}")))?;
    if req.edit.stage() != n {
        return Err(stepwise_core::document::DocumentError::InvalidEdit(format!(
            "this edit belongs to stage {}, not stage {n}",
            req.edit.stage()
        ))
        .into());
    }
    let _guard = project.write.lock().await;
    let mut doc = (*project.snapshot()).clone();
    doc.apply_edit(req.expected_revision, &req.edit)?;
    app.store.persist(&project.id, &doc)?;
    project.commit(doc);
    Ok(Json(stage_body(&project, &project.snapshot(), n)))
}

enum RunOutcome {
    Finished(StageReport, Arc<TutorialDocument>),
    Failed(ApiError),
}

async fn execute_stage(app: Arc<AppState>, project: Arc<Project>, stage: usize) -> RunOutcome {
    let result = async {
        let _guard = project.write.lock().await;
        let mut doc = (*project.snapshot()).clone();
        check_prerequisites(&doc, stage)?;
        let frames = match stage {
            2 | 4 => project.frames(app.frames_dir(&doc)).await?,
            _ => Arc::new(Vec::new()),
        };
        let detector = app.detector_for(&doc)?;
        let provider = app.provider.clone();
        let (doc, report) = tokio::task::spawn_blocking(move || {
            let ctx = StageContext::new(provider.as_ref(), detector.as_ref(), &frames);
            run_stage(&mut doc, stage, &ctx).map(|r| (doc, r))
        })
        .await
        .map_err(|e| ApiError::Internal(e.to_string()))??;
        app.store.persist(&project.id, &doc)?;
        project.commit(doc);
        Ok::<_, ApiError>(report)
    }
    .await;
    match result {
        Ok(report) => {
            project.set_job(stage, JobState::Done { report: report.clone() });
            RunOutcome::Finished(report, project.snapshot())
        }
        Err(e) => {
            let (_, kind) = e.classify();
            project.set_job(
                stage,
                JobState::Failed {
                    error: kind.to_string(),
                    message: e.to_string(),
                },
            );
            RunOutcome::Failed(e)
        }
    }
}

/// Runs a stage. Answers with the result when the run finishes within the
/// configured wait, and with 202 plus a poll URL otherwise. A stage whose
/// model call failed still stores heuristic output, reported with 502.
async fn run_stage_handler(
    State(app): State<Arc<AppState>>,
    Path((id, n)): Path<(String, usize)>,
) -> AppResult<Response> {
    check_stage(n)?;
    let project = app.store.get(&id)?;
    check_prerequisites(&project.snapshot(), n).map_err(ApiError::from)?;
    project.set_job(n, JobState::Running);
    let task = tokio::spawn(execute_stage(app.clone(), project.clone(), n));
    let outcome = match tokio::time::timeout(app.settings.sync_wait, task).await {
        Ok(joined) => joined.map_err(|e| ApiError::Internal(e.to_string()))?,
        Err(_) => {
            let poll = format!("/projects/{id}/stages/{n}");
            let body = json!({ "stage": n, "job": JobState::Running, "poll": poll });
            return Ok((StatusCode::ACCEPTED, [(header::LOCATION, poll)], Json(body)).into_response());
        }
    };
    match outcome {
        RunOutcome::Failed(e) => Err(e),
        RunOutcome::Finished(report, doc) => {
            let mut body = stage_body(&project, &doc, n);
            if let Some(err) = &report.provider_error {
                tracing::warn!(project = %id, stage = n, error = %err, "provider failed; stored heuristic fallback");
                body["error"] = json!("ProviderFailure");
                body["message"] = json!(err);
                body["fallback"] = json!(true);
                return Ok((StatusCode::BAD_GATEWAY, Json(body)).into_response());
            }
            body["report"] = json!(report);
            Ok(Json(body).into_response())
        }
    }
}

async fn get_preview(State(app): State<Arc<AppState>>, Path(id): Path<String>) -> AppResult<Json<Value>> {
    let project = app.store.get(&id)?;
    Ok(Json(json!(project.snapshot().preview())))
}

#[derive(Debug, Deserialize)]
struct ThumbnailQuery {
    step: usize,
    #[serde(default = "default_k")]
    k: usize,
}

fn default_k() -> usize {
    3
}

/// Up to `k` candidate frames for one step; fewer when the step has fewer
/// distinct frames.
async fn get_thumbnails(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
    Query(q): Query<ThumbnailQuery>,
) -> AppResult<Json<Value>> {
    let project = app.store.get(&id)?;
    let doc = project.snapshot();
    let step = doc
        .steps
        .get(q.step)
        .ok_or_else(|| stepwise_core::document::DocumentError::UnknownTarget(format!("step {}", q.step)))?;
    if q.k == 0 {
        return Err(ShotError::InvalidCount.into());
    }
    let frames = project.frames(app.frames_dir(&doc)).await?;
    let cuts = detect_boundaries(&frames, DEFAULT_THRESHOLD)?;
    let picked = match select_thumbnails(step.draft.interval(), &frames, &cuts, q.k) {
        Err(ShotError::NoFramesInInterval { .. }) => Vec::new(),
        other => other?,
    };
    let candidates: Vec<Value> = picked
        .iter()
        .map(|f| json!({ "image_ref": f.image_ref, "time_s": f.time_s }))
        .collect();
    Ok(Json(json!({ "step": q.step, "k": q.k, "candidates": candidates })))
}
