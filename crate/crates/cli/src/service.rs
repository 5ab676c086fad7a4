//! HTTP service over read-only models; feedback writes go through one lock.

use std::collections::BTreeMap;
use std::sync::{Arc, Mutex};
use std::time::Instant;

use axum::body::Bytes;
use axum::extract::{Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use clozegen_core::features::SCHEMA_VERSION;
use clozegen_core::pipeline::{GenerateOptions, RequestError};
use clozegen_core::ranker::groups::write_groups;
use clozegen_core::{Pipeline, RankModel};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::api::{ApiErrorBody, GenerationRequest, GenerationResponse};
use crate::config::Config;
use crate::error::{CliResult, Failure};
use crate::feedback::{export_groups, ExportFilter, FeedbackInput, FeedbackStore};
use crate::resources;

pub struct AppState {
    pub pipeline: Pipeline,
    pub models: BTreeMap<String, Arc<RankModel>>,
    pub default_model: String,
    pub feedback: Mutex<FeedbackStore>,
}

impl AppState {
    pub fn load(cfg: &Config) -> CliResult<Self> {
        let pipeline = resources::load_pipeline(cfg)?;
        let (models, default_model) = resources::load_models(cfg)?;
        let store = FeedbackStore::open(&cfg.service.feedback_log, cfg.service.compact_every)
            .map_err(|e| Failure::new("feedback_log", e.to_string()))?;
        Ok(Self { pipeline, models, default_model, feedback: Mutex::new(store) })
    }
}

pub struct ApiError {
    status: StatusCode,
    body: ApiErrorBody,
}

impl ApiError {
    fn new(status: StatusCode, error: &str, field: Option<&str>, message: impl Into<String>) -> Self {
        Self { status, body: ApiErrorBody { error: error.into(), field: field.map(str::to_string), message: message.into() } }
    }

    fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", None, message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

fn parse_body<T: DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "invalid_json", None, e.to_string()))
}

fn request_error(e: RequestError) -> ApiError {
    let field = match e {
        RequestError::BlankCount(_) => "stem",
        RequestError::EmptyKey => "key",
        RequestError::ZeroN => "n",
    };
    ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_request", Some(field), e.to_string())
}

#[derive(Serialize)]
struct Health {
    status: &'static str,
    model_id: String,
    schema_version: u32,
}

async fn health(State(s): State<Arc<AppState>>) -> Json<Health> {
    Json(Health { status: "ok", model_id: s.default_model.clone(), schema_version: SCHEMA_VERSION })
}

#[derive(Serialize)]
struct ModelInfo {
    id: String,
    kind: String,
    schema_version: u32,
    format_version: u32,
    trees: usize,
    default: bool,
}

async fn models(State(s): State<Arc<AppState>>) -> Json<serde_json::Value> {
    let list: Vec<ModelInfo> = s
        .models
        .iter()
        .map(|(id, m)| ModelInfo {
            id: id.clone(),
            kind: m.kind.to_string(),
            schema_version: m.schema_version,
            format_version: m.format_version,
            trees: m.trees.len(),
            default: *id == s.default_model,
        })
        .collect();
    Json(serde_json::json!({ "default": s.default_model, "models": list }))
}

/// Generation shared by the handler and tests; no timing.
pub fn generate(state: &AppState, req: &GenerationRequest) -> Result<GenerationResponse, ApiError> {
    let id = req.options.model_id.clone().unwrap_or_else(|| state.default_model.clone());
    let model = state
        .models
        .get(&id)
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "unknown_model", Some("options.model_id"), format!("no model {id:?}")))?;
    let opts = GenerateOptions { use_web_score: req.options.use_web_score };
    let list = state.pipeline.generate(model, &req.stem, &req.key, req.n, opts).map_err(request_error)?;
    Ok(GenerationResponse::from_ranked(&list, None))
}

async fn distractors(State(s): State<Arc<AppState>>, body: Bytes) -> Result<Json<GenerationResponse>, ApiError> {
    let req: GenerationRequest = parse_body(&body)?;
    let started = Instant::now();
    let mut resp = tokio::task::spawn_blocking(move || generate(&s, &req))
        .await
        .map_err(|e| ApiError::internal(e.to_string()))??;
    resp.timing_ms = Some(started.elapsed().as_secs_f64() * 1000.0);
    Ok(Json(resp))
}

async fn feedback(State(s): State<Arc<AppState>>, body: Bytes) -> Result<(StatusCode, Json<serde_json::Value>), ApiError> {
    let input: FeedbackInput = parse_body(&body)?;
    input
        .validate()
        .map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_feedback", Some(e.field), e.message))?;
    let now = chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true);
    let id = tokio::task::spawn_blocking(move || {
        let mut store = s.feedback.lock().map_err(|_| ApiError::internal("feedback store poisoned"))?;
        store.append(input, now).map_err(|e| ApiError::internal(e.to_string()))
    })
    .await
    .map_err(|e| ApiError::internal(e.to_string()))??;
    Ok((StatusCode::CREATED, Json(serde_json::json!({ "id": id }))))
}

async fn export(State(s): State<Arc<AppState>>, Query(filter): Query<ExportFilter>) -> Result<Response, ApiError> {
    let body = tokio::task::spawn_blocking(move || {
        let records = s.feedback.lock().map_err(|_| ApiError::internal("feedback store poisoned"))?.records().to_vec();
        let groups = export_groups(&records, &filter, &s.pipeline.resources);
        let mut out = Vec::new();
        write_groups(&groups, &mut out).map_err(|e| ApiError::internal(e.to_string()))?;
        Ok::<_, ApiError>(out)
    })
    .await
    .map_err(|e| ApiError::internal(e.to_string()))??;
    Ok(([(header::CONTENT_TYPE, "application/x-ndjson")], body).into_response())
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/v1/health", get(health))
        .route("/v1/models", get(models))
        .route("/v1/distractors", post(distractors))
        .route("/v1/feedback", post(feedback))
        .route("/v1/feedback/export", get(export))
        .with_state(state)
}

pub fn serve(cfg: &Config, bind: &str) -> CliResult<()> {
    let state = Arc::new(AppState::load(cfg)?);
    let rt = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| Failure::new("startup", e.to_string()))?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(bind)
            .await
            .map_err(|e| Failure::new("startup", format!("cannot bind {bind}: {e}")))?;
        log::info!("listening on {bind} with default model {}", state.default_model);
        axum::serve(listener, router(state))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await
            .map_err(|e| Failure::new("startup", e.to_string()))
    })
}
