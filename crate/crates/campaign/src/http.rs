//! HTTP/JSON routes over [`Service`].

use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{Html, IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::campaign::{CampaignSpec, Observation};
use crate::error::{ErrorKind, ServiceError};
use crate::service::Service;

const INDEX_HTML: &str = include_str!("../static/index.html");
const DEFAULT_ACTOR: &str = "operator";

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let status = match self.kind {
            ErrorKind::Invalid => StatusCode::UNPROCESSABLE_ENTITY,
            ErrorKind::Conflict => StatusCode::CONFLICT,
            ErrorKind::NotFound => StatusCode::NOT_FOUND,
            ErrorKind::Internal => StatusCode::INTERNAL_SERVER_ERROR,
        };
        (status, [(header::CONTENT_TYPE, "application/json")], self.to_json()).into_response()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ObservationRequest {
    pub observations: Vec<Observation>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BatchResponse {
    pub batch: Vec<geosample_core::design::Recommendation>,
}

fn actor(headers: &HeaderMap) -> String {
    headers
        .get("x-actor")
        .and_then(|v| v.to_str().ok())
        .filter(|s| !s.trim().is_empty())
        .unwrap_or(DEFAULT_ACTOR)
        .to_string()
}

fn parse_json(body: &Bytes) -> Result<Value, ServiceError> {
    serde_json::from_slice(body).map_err(|e| ServiceError::invalid("malformed_json", e.to_string()))
}

fn decode<T: DeserializeOwned>(value: Value) -> Result<T, ServiceError> {
    serde_json::from_value(value).map_err(|e| ServiceError::invalid("invalid_body", e.to_string()))
}

async fn index() -> Html<&'static str> {
    Html(INDEX_HTML)
}

async fn create(
    State(svc): State<Arc<Service>>,
    headers: HeaderMap,
    body: Bytes,
) -> Result<impl IntoResponse, ServiceError> {
    let value = parse_json(&body)?;
    let seed_given = value.pointer("/design/seed").is_some();
    if value.get("village_csv").is_none() {
        return Err(ServiceError::invalid("missing_field", "village_csv is required").with_field("village_csv"));
    }
    let spec: CampaignSpec = decode(value)?;
    let view = svc.create(spec, seed_given, &actor(&headers)).await?;
    Ok((StatusCode::CREATED, Json(view)))
}

async fn snapshot(State(svc): State<Arc<Service>>, Path(id): Path<String>) -> Result<impl IntoResponse, ServiceError> {
    Ok(Json(svc.snapshot(&id)?))
}

async fn observe(
    State(svc): State<Arc<Service>>,
    Path(id): Path<String>,
    headers: HeaderMap,
    body: Bytes,
) -> Result<impl IntoResponse, ServiceError> {
    let value = parse_json(&body)?;
    let statuses = value.get("observations").and_then(Value::as_array);
    for (k, o) in statuses.into_iter().flatten().enumerate() {
        let status = o.get("status").and_then(Value::as_str);
        if !matches!(status, Some("infested" | "clear")) {
            return Err(
                ServiceError::invalid("invalid_status", "status must be \"infested\" or \"clear\"")
                    .with_field(format!("observations[{k}].status")),
            );
        }
    }
    let req: ObservationRequest = decode(value).map_err(|e| e.with_field("observations"))?;
    Ok(Json(svc.observe(&id, req.observations, &actor(&headers)).await?))
}

async fn next_batch(
    State(svc): State<Arc<Service>>,
    Path(id): Path<String>,
    headers: HeaderMap,
) -> Result<impl IntoResponse, ServiceError> {
    let batch = svc.next_batch(&id, &actor(&headers)).await?;
    Ok(Json(BatchResponse { batch }))
}

async fn report(State(svc): State<Arc<Service>>, Path(id): Path<String>) -> Result<impl IntoResponse, ServiceError> {
    Ok(Json(svc.report(&id).await?))
}

async fn fallback() -> ServiceError {
    ServiceError::new(ErrorKind::NotFound, "no_route", "no such endpoint")
}

pub fn router(svc: Arc<Service>) -> Router {
    Router::new()
        .route("/", get(index))
        .route("/campaigns", post(create))
        .route("/campaigns/{id}", get(snapshot))
        .route("/campaigns/{id}/observations", post(observe))
        .route("/campaigns/{id}/next-batch", post(next_batch))
        .route("/campaigns/{id}/report", get(report))
        .fallback(fallback)
        .with_state(svc)
}
