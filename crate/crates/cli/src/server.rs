//! HTTP service.

use std::collections::BTreeMap;
use std::ops::ControlFlow;
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;

use ocelgan::gan::{train_with_observer, CheckpointMeta, EpochRecord};

use crate::error::AppError;
use crate::payload::{self, PrefixRequest, TrainRequest, TrainingSource};
use crate::store::Store;

impl IntoResponse for AppError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (status, Json(self.body)).into_response()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JobKind {
    Train,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JobStatus {
    Queued,
    Running,
    Done,
    Failed,
}

impl JobStatus {
    pub fn is_active(self) -> bool {
        matches!(self, JobStatus::Queued | JobStatus::Running)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Progress {
    /// Last finished epoch, 0 before the first.
    pub epoch: usize,
    pub epochs: usize,
    pub history: Vec<EpochRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JobRecord {
    pub job_id: String,
    pub kind: JobKind,
    pub status: JobStatus,
    pub config: TrainRequest,
    pub progress: Progress,
    pub model_id: Option<String>,
    pub error: Option<crate::error::ErrorBody>,
}

#[derive(Default)]
struct Jobs {
    next: u64,
    records: BTreeMap<String, JobRecord>,
}

#[derive(Clone)]
pub struct AppState {
    store: Arc<Store>,
    jobs: Arc<Mutex<Jobs>>,
}

impl AppState {
    pub fn new(store: Store) -> Self {
        Self { store: Arc::new(store), jobs: Arc::default() }
    }

    fn update(&self, job_id: &str, f: impl FnOnce(&mut JobRecord)) {
        if let Some(r) = self.jobs.lock().expect("job table lock").records.get_mut(job_id) {
            f(r);
        }
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/spec", get(spec))
        .route("/logs", post(post_log).get(list_logs))
        .route("/logs/{id}/stats", get(log_stats))
        .route("/logs/{id}/relations", get(log_relations))
        .route("/logs/{id}/schema", get(log_schema))
        .route("/trainings", post(post_training))
        .route("/trainings/{job_id}", get(get_training))
        .route("/models", get(list_models))
        .route("/models/{id}", get(get_model))
        .route("/models/{id}/predict", post(predict))
        .layer(DefaultBodyLimit::max(512 * 1024 * 1024))
        .with_state(state)
}

pub async fn serve(addr: std::net::SocketAddr, state: AppState) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(state)).await
}

fn parse_body<T: serde::de::DeserializeOwned>(body: &[u8]) -> Result<T, AppError> {
    serde_json::from_slice(body).map_err(|e| {
        AppError::bad_request("invalid_request", format!("request body: {e}"))
            .with_details(json!({ "line": e.line(), "column": e.column() }))
    })
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T, AppError> + Send + 'static) -> Result<T, AppError> {
    tokio::task::spawn_blocking(f).await.map_err(|e| AppError::internal(e.to_string()))?
}

async fn spec() -> Json<serde_json::Value> {
    Json(crate::openapi::document())
}

async fn post_log(State(s): State<AppState>, body: Bytes) -> Result<impl IntoResponse, AppError> {
    let id = blocking(move || s.store.put_log(&body)).await?;
    Ok((StatusCode::CREATED, Json(json!({ "log_id": id }))))
}

async fn list_logs(State(s): State<AppState>) -> Result<impl IntoResponse, AppError> {
    Ok(Json(json!({ "log_ids": s.store.log_ids()? })))
}

#[derive(Deserialize)]
struct StatsQuery {
    object_type: Option<String>,
}

async fn log_stats(
    State(s): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<StatsQuery>,
) -> Result<impl IntoResponse, AppError> {
    let rows = blocking(move || payload::stats(&s.store.log(&id)?, q.object_type.as_deref())).await?;
    Ok(Json(rows))
}

async fn log_relations(State(s): State<AppState>, Path(id): Path<String>) -> Result<impl IntoResponse, AppError> {
    let rel = blocking(move || Ok(payload::relations(&s.store.log(&id)?))).await?;
    Ok(Json(rel))
}

async fn log_schema(State(s): State<AppState>, Path(id): Path<String>) -> Result<impl IntoResponse, AppError> {
    let schema = blocking(move || Ok(payload::log_schema(&s.store.log(&id)?))).await?;
    Ok(Json(schema))
}

async fn post_training(State(s): State<AppState>, body: Bytes) -> Result<impl IntoResponse, AppError> {
    let req: TrainRequest = parse_body(&body)?;
    req.config.validate()?;
    let log = {
        let s = s.clone();
        let id = req.log_id.clone();
        blocking(move || s.store.log(&id)).await?
    };
    // cheap checks first so that a bad request never occupies the trainer
    payload::check_selection(&log, &req.object_type, &req.attrs)?;

    let job_id = {
        let mut jobs = s.jobs.lock().expect("job table lock");
        if let Some(active) = jobs.records.values().find(|r| r.status.is_active()) {
            return Err(AppError::new(409, "training_in_progress", "another training job is running")
                .with_details(json!({ "job_id": active.job_id })));
        }
        jobs.next += 1;
        let job_id = format!("job-{:06}", jobs.next);
        jobs.records.insert(
            job_id.clone(),
            JobRecord {
                job_id: job_id.clone(),
                kind: JobKind::Train,
                status: JobStatus::Queued,
                progress: Progress { epochs: req.config.epochs, ..Default::default() },
                config: req.clone(),
                model_id: None,
                error: None,
            },
        );
        job_id
    };

    let state = s.clone();
    let id = job_id.clone();
    tokio::task::spawn_blocking(move || {
        state.update(&id, |r| r.status = JobStatus::Running);
        match run_training(&state, &id, &req, &log) {
            Ok(model_id) => state.update(&id, |r| {
                r.status = JobStatus::Done;
                r.model_id = Some(model_id);
            }),
            Err(e) => state.update(&id, |r| {
                r.status = JobStatus::Failed;
                r.error = Some(e.body);
            }),
        }
    });
    Ok((StatusCode::ACCEPTED, Json(json!({ "job_id": job_id }))))
}

fn run_training(
    state: &AppState,
    job_id: &str,
    req: &TrainRequest,
    log: &ocelgan::ocel::OcelLog,
) -> Result<String, AppError> {
    let data = payload::prepare_training(log, &req.object_type, &req.attrs, req.config.seed)?;
    let out = train_with_observer(&req.config, &data.schema, &data.bundle, |record| {
        state.update(job_id, |r| {
            r.progress.epoch = record.epoch;
            r.progress.history.push(record.clone());
        });
        ControlFlow::Continue(())
    })?;
    let meta = CheckpointMeta::for_model(&out.model, out.best_epoch, out.best_validation);
    let source = TrainingSource { log_id: req.log_id.clone(), object_type: req.object_type.clone(), attrs: req.attrs.clone() };
    state.store.put_model(&out.model, &meta, &out.history, &source)
}

async fn get_training(State(s): State<AppState>, Path(job_id): Path<String>) -> Result<impl IntoResponse, AppError> {
    let jobs = s.jobs.lock().expect("job table lock");
    jobs.records.get(&job_id).cloned().map(Json).ok_or_else(|| AppError::not_found("job", &job_id))
}

async fn list_models(State(s): State<AppState>) -> Result<impl IntoResponse, AppError> {
    Ok(Json(blocking(move || s.store.models()).await?))
}

async fn get_model(State(s): State<AppState>, Path(id): Path<String>) -> Result<impl IntoResponse, AppError> {
    let (summary, schema) = blocking(move || {
        let (model, meta, source) = s.store.model(&id)?;
        Ok((payload::ModelSummary::new(id, &meta, source), model.schema))
    })
    .await?;
    Ok(Json(json!({ "model": summary, "schema": schema })))
}

async fn predict(State(s): State<AppState>, Path(id): Path<String>, body: Bytes) -> Result<impl IntoResponse, AppError> {
    let req: PrefixRequest = parse_body(&body)?;
    let resp = blocking(move || {
        let (model, _, source) = s.store.model(&id)?;
        payload::predict(&model, source.as_ref(), &req)
    })
    .await?;
    Ok(Json(resp))
}
