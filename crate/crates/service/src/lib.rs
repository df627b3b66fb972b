//! HTTP facade over a tabsynth workspace: dataset upload, schema review,
//! queued training, synthesis and evaluation reports.
//!
//! | method | path | result |
//! |---|---|---|
//! | `POST` | `/datasets` | multipart CSV upload, 201 with id and inferred schema |
//! | `GET` | `/datasets/{id}` | entry and current schema |
//! | `PUT` | `/datasets/{id}/schema` | apply column overrides |
//! | `POST` | `/models` | queue a training job, 202 |
//! | `GET` | `/models/{id}` | entry and loss history |
//! | `GET` | `/jobs/{id}` | job state and progress |
//! | `POST` | `/models/{id}/synthesize` | queue a synthesis job, 202 |
//! | `GET` | `/synthetic/{id}.csv` | synthesized rows |
//! | `POST` | `/reports` | queue an evaluation job, 202 |
//! | `GET` | `/reports/{id}` | report document |

mod jobs;

use std::sync::Arc;

use axum::extract::{DefaultBodyLimit, Multipart, Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::{json, Value};

use tabsynth::data::{apply_overrides, OverrideDocument, TargetSpec};
use tabsynth::gan::{FixedCondition, TrainConfig};
use tabsynth::workspace::Workspace;
use tabsynth::Error;

pub use jobs::{Job, JobKind, JobState, Progress};
use jobs::{JobBoard, Task, Worker};

/// Error body `{"error": message}` with a status derived from the cause.
#[derive(Debug)]
pub struct ApiError(StatusCode, String);

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        ApiError(status, message.into())
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::NotFound(_) | Error::UnknownColumn(_) => StatusCode::NOT_FOUND,
            Error::Io { .. } => StatusCode::INTERNAL_SERVER_ERROR,
            e if e.is_training_failure() => StatusCode::INTERNAL_SERVER_ERROR,
            _ => StatusCode::UNPROCESSABLE_ENTITY,
        };
        ApiError(status, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(json!({ "error": self.1 }))).into_response()
    }
}

type ApiResult<T> = std::result::Result<T, ApiError>;

#[derive(Clone)]
pub struct AppState {
    ws: Workspace,
    jobs: Arc<JobBoard>,
    worker: Worker,
}

impl AppState {
    /// Opens the workspace and starts the training worker. Artifacts already
    /// recorded in the workspace manifest are served as-is.
    pub fn new(ws: Workspace) -> Self {
        let jobs = Arc::new(JobBoard::default());
        let worker = Worker::spawn(ws.clone(), jobs.clone());
        AppState { ws, jobs, worker }
    }

    pub fn workspace(&self) -> &Workspace {
        &self.ws
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/datasets", post(upload_dataset))
        .route("/datasets/{id}", get(get_dataset))
        .route("/datasets/{id}/schema", put(put_schema))
        .route("/models", post(create_model))
        .route("/models/{id}", get(get_model))
        .route("/models/{id}/synthesize", post(synthesize))
        .route("/jobs/{id}", get(get_job))
        .route("/synthetic/{file}", get(get_synthetic))
        .route("/reports", post(create_report))
        .route("/reports/{id}", get(get_report))
        .layer(DefaultBodyLimit::max(256 * 1024 * 1024))
        .with_state(state)
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> tabsynth::Result<T> + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?
        .map_err(ApiError::from)
}

async fn upload_dataset(State(st): State<AppState>, mut multipart: Multipart) -> ApiResult<(StatusCode, Json<Value>)> {
    let mut upload = None;
    while let Some(field) = multipart
        .next_field()
        .await
        .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, e.to_string()))?
    {
        if field.name() == Some("file") || upload.is_none() {
            let name = field.file_name().unwrap_or("upload.csv").to_string();
            let bytes = field
                .bytes()
                .await
                .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, e.to_string()))?;
            upload = Some((name, bytes));
        }
    }
    let (name, bytes) = upload.ok_or_else(|| ApiError::new(StatusCode::BAD_REQUEST, "no file field"))?;
    let ws = st.ws.clone();
    let (entry, schema) = blocking(move || ws.add_dataset(&name, &bytes)).await?;
    Ok((StatusCode::CREATED, Json(json!({ "dataset": entry, "schema": schema }))))
}

async fn get_dataset(State(st): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    let entry = st
        .ws
        .manifest()?
        .dataset(&id)
        .cloned()
        .ok_or_else(|| Error::NotFound(format!("dataset `{id}`")))?;
    let schema = st.ws.load_schema(&id)?;
    Ok(Json(json!({ "dataset": entry, "schema": schema })))
}

async fn put_schema(
    State(st): State<AppState>,
    Path(id): Path<String>,
    Json(doc): Json<OverrideDocument>,
) -> ApiResult<Json<Value>> {
    let current = st.ws.load_schema(&id)?;
    let updated = apply_overrides(&current, &doc.overrides)?;
    let (table, _) = st.ws.load_dataset(&id)?;
    updated.check_table(&table)?;
    st.ws.save_schema(&id, &updated)?;
    Ok(Json(json!({ "schema": updated })))
}

#[derive(Debug, Deserialize)]
struct TrainRequest {
    dataset: String,
    /// Problem type and label column; replaces the schema's target.
    #[serde(default)]
    problem: Option<TargetSpec>,
    #[serde(default)]
    epochs: Option<i64>,
    #[serde(default)]
    seed: Option<u64>,
    #[serde(default)]
    classifier_on: Option<bool>,
    #[serde(default)]
    info_loss_on: Option<bool>,
    #[serde(default)]
    vgm_on: Option<bool>,
    /// Full training configuration; the fields above take precedence.
    #[serde(default)]
    config: Option<TrainConfig>,
}

async fn create_model(State(st): State<AppState>, Json(req): Json<TrainRequest>) -> ApiResult<(StatusCode, Json<Value>)> {
    let mut config = req.config.clone().unwrap_or_default();
    if let Some(e) = req.epochs {
        if e <= 0 {
            return Err(ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "epochs must be at least 1"));
        }
        config.epochs = e as usize;
    }
    if let Some(s) = req.seed {
        config.seed = s;
    }
    if let Some(v) = req.classifier_on {
        config.classifier_on = v;
    }
    if let Some(v) = req.info_loss_on {
        config.info_loss_on = v;
    }
    if let Some(v) = req.vgm_on {
        config.vgm_on = v;
    }
    config.validate()?;

    let (table, mut schema) = st.ws.load_dataset(&req.dataset)?;
    if let Some(problem) = &req.problem {
        problem.validate(&table)?;
        let target = problem.column_name()?;
        let overrides: Vec<_> = schema
            .columns()
            .iter()
            .map(|c| tabsynth::data::ColumnOverride {
                column: c.name.clone(),
                target: Some(Some(c.name.as_str()) == target),
                ..Default::default()
            })
            .collect();
        schema = apply_overrides(&schema, &overrides)?;
        st.ws.save_schema(&req.dataset, &schema)?;
    }

    let request_bytes = serde_json::to_vec(&json!({ "dataset": req.dataset, "config": config }))
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?;
    let model = st.ws.reserve_id("model", &request_bytes)?;
    let total = config.epochs;
    let job = st.jobs.create(JobKind::Train, total, Some(model.clone()));
    st.worker.submit(Task::Train {
        job: job.id.clone(),
        model: model.clone(),
        dataset: req.dataset,
        table,
        schema,
        config,
    });
    Ok((StatusCode::ACCEPTED, Json(json!({ "job": job, "model": model }))))
}

async fn get_model(State(st): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    let manifest = st.ws.manifest()?;
    match manifest.model(&id) {
        Some(entry) => {
            let ws = st.ws.clone();
            let id2 = id.clone();
            let model = blocking(move || ws.load_model(&id2)).await?;
            Ok(Json(json!({ "model": entry, "history": model.history(), "trained": true })))
        }
        None => match st.jobs.for_artifact(&id) {
            Some(job) => Ok(Json(json!({ "model": { "id": id }, "job": job, "trained": false }))),
            None => Err(Error::NotFound(format!("model `{id}`")).into()),
        },
    }
}

async fn get_job(State(st): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<Job>> {
    st.jobs
        .get(&id)
        .map(Json)
        .ok_or_else(|| Error::NotFound(format!("job `{id}`")).into())
}

#[derive(Debug, Deserialize)]
struct SynthesizeRequest {
    rows: i64,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    condition: Option<String>,
}

async fn synthesize(
    State(st): State<AppState>,
    Path(id): Path<String>,
    Json(req): Json<SynthesizeRequest>,
) -> ApiResult<(StatusCode, Json<Value>)> {
    if req.rows <= 0 {
        return Err(ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "rows must be at least 1"));
    }
    let condition = req
        .condition
        .as_deref()
        .map(str::parse::<FixedCondition>)
        .transpose()?;
    if st.ws.manifest()?.model(&id).is_none() {
        return match st.jobs.for_artifact(&id) {
            Some(job) => Err(ApiError::new(
                StatusCode::CONFLICT,
                format!("model `{id}` is not trained yet (job {} is {:?})", job.id, job.state),
            )),
            None => Err(Error::NotFound(format!("model `{id}`")).into()),
        };
    }
    let job = st.jobs.create(JobKind::Synthesize, req.rows as usize, None);
    let (ws, jobs, job_id) = (st.ws.clone(), st.jobs.clone(), job.id.clone());
    tokio::task::spawn_blocking(move || {
        jobs::run_synthesis(&ws, &jobs, &job_id, &id, req.rows as usize, req.seed, condition)
    });
    Ok((StatusCode::ACCEPTED, Json(json!({ "job": job }))))
}

async fn get_synthetic(State(st): State<AppState>, Path(file): Path<String>) -> ApiResult<Response> {
    let id = file.strip_suffix(".csv").unwrap_or(&file).to_string();
    if st.ws.manifest()?.synthetic(&id).is_none() {
        return Err(Error::NotFound(format!("synthetic table `{id}`")).into());
    }
    let path = st.ws.synthetic_path(&id);
    let bytes = blocking(move || std::fs::read(&path).map_err(|e| Error::Io { path, source: e })).await?;
    Ok((
        [
            (header::CONTENT_TYPE, "text/csv".to_string()),
            (header::CONTENT_DISPOSITION, format!("attachment; filename=\"{id}.csv\"")),
        ],
        bytes,
    )
        .into_response())
}

#[derive(Debug, Deserialize)]
struct ReportRequest {
    model: String,
    synthetic: String,
    #[serde(default)]
    seed: u64,
}

async fn create_report(State(st): State<AppState>, Json(req): Json<ReportRequest>) -> ApiResult<(StatusCode, Json<Value>)> {
    let manifest = st.ws.manifest()?;
    if manifest.model(&req.model).is_none() {
        return Err(Error::NotFound(format!("model `{}`", req.model)).into());
    }
    if manifest.synthetic(&req.synthetic).is_none() {
        return Err(Error::NotFound(format!("synthetic table `{}`", req.synthetic)).into());
    }
    let job = st.jobs.create(JobKind::Report, 1, None);
    let (ws, jobs, job_id) = (st.ws.clone(), st.jobs.clone(), job.id.clone());
    tokio::task::spawn_blocking(move || jobs::run_report(&ws, &jobs, &job_id, &req.model, &req.synthetic, req.seed));
    Ok((StatusCode::ACCEPTED, Json(json!({ "job": job }))))
}

async fn get_report(State(st): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    let ws = st.ws.clone();
    let report = blocking(move || ws.load_report(&id)).await?;
    Ok(Json(serde_json::to_value(report).map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?))
}
