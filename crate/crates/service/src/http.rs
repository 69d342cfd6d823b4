use std::net::SocketAddr;
use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, Query, State};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};

use unli_core::qualification::QualificationResult;

use crate::error::ServiceError;
use crate::state::{AnnotationService, PairView, Progress, ServedBatch, SubmitOutcome};

type Shared = Arc<AnnotationService>;

#[derive(Deserialize)]
pub struct QualifyRequest {
    pub annotator_id: String,
    pub responses: Vec<i64>,
}

#[derive(Deserialize)]
pub struct AnnotatorQuery {
    pub annotator_id: String,
}

#[derive(Deserialize)]
pub struct SubmitRequest {
    #[serde(default)]
    pub annotator_id: Option<String>,
    pub raws: Vec<i64>,
}

#[derive(Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum BatchResponse {
    Ok { batch: ServedBatch },
    NoWork,
}

#[derive(Deserialize)]
pub struct ScaleQuery {
    #[serde(default)]
    pub stride: Option<u32>,
}

#[derive(Serialize)]
pub struct ScaleTable {
    pub beta_low: f64,
    pub beta_high: f64,
    pub steps: u32,
    pub table: Vec<(u32, f64)>,
}

fn body<T>(payload: Result<Json<T>, JsonRejection>) -> Result<T, ServiceError> {
    payload
        .map(|Json(v)| v)
        .map_err(|e| ServiceError::BadRequest(e.body_text()))
}

async fn qualify(
    State(svc): State<Shared>,
    payload: Result<Json<QualifyRequest>, JsonRejection>,
) -> Result<Json<QualificationResult>, ServiceError> {
    let req = body(payload)?;
    svc.qualify(&req.annotator_id, &req.responses).map(Json)
}

async fn qualification_items(State(svc): State<Shared>) -> Json<Vec<PairView>> {
    Json(svc.qualification_items())
}

async fn next_batch(
    State(svc): State<Shared>,
    Query(q): Query<AnnotatorQuery>,
) -> Result<Json<BatchResponse>, ServiceError> {
    Ok(Json(match svc.next_batch(&q.annotator_id)? {
        Some(batch) => BatchResponse::Ok { batch },
        None => BatchResponse::NoWork,
    }))
}

async fn submit_batch(
    State(svc): State<Shared>,
    Path(batch_id): Path<String>,
    payload: Result<Json<SubmitRequest>, JsonRejection>,
) -> Result<Json<SubmitOutcome>, ServiceError> {
    let req = body(payload)?;
    svc.submit_batch(req.annotator_id.as_deref(), &batch_id, &req.raws)
        .map(Json)
}

async fn progress(State(svc): State<Shared>) -> Result<Json<Progress>, ServiceError> {
    svc.progress().map(Json)
}

async fn pair(
    State(svc): State<Shared>,
    Path(id): Path<String>,
) -> Result<Json<PairView>, ServiceError> {
    svc.pair(&id)
        .map(Json)
        .ok_or_else(|| ServiceError::NotFound(format!("unknown pair {id}")))
}

async fn scale(State(svc): State<Shared>, Query(q): Query<ScaleQuery>) -> Json<ScaleTable> {
    let params = svc.config().scale;
    Json(ScaleTable {
        beta_low: params.beta_low,
        beta_high: params.beta_high,
        steps: params.steps,
        table: params.lookup_table(q.stride.unwrap_or(100)),
    })
}

pub fn router(service: Shared) -> Router {
    Router::new()
        .route("/qualify", post(qualify))
        .route("/qualification", get(qualification_items))
        .route("/batch", get(next_batch))
        .route("/batch/{batch_id}", post(submit_batch))
        .route("/progress", get(progress))
        .route("/pairs/{id}", get(pair))
        .route("/scale", get(scale))
        .with_state(service)
}

/// Serves until Ctrl-C.
pub async fn serve(service: Shared, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!("annotation server listening on {}", listener.local_addr()?);
    axum::serve(listener, router(service))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
