use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{FromRequest, Path, Query, Request, State};
use axum::http::{header, Uri};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::app::{AppState, Fulfillment, NewObservation, NewOrder, NewPatient};
use crate::error::ServiceError;

pub type Shared = Arc<AppState>;

/// JSON body whose rejections come back as 422 with the usual error body.
pub struct ApiJson<T>(pub T);

impl<S: Send + Sync, T: DeserializeOwned> FromRequest<S> for ApiJson<T> {
    type Rejection = ServiceError;

    async fn from_request(req: Request, state: &S) -> Result<Self, Self::Rejection> {
        match Json::<T>::from_request(req, state).await {
            Ok(Json(v)) => Ok(ApiJson(v)),
            Err(e) => Err(ServiceError::InvalidValue(match e {
                JsonRejection::JsonDataError(e) => e.body_text(),
                other => other.body_text(),
            })),
        }
    }
}

/// Runs model and store work off the async executor.
async fn blocking<T, F>(f: F) -> Result<T, ServiceError>
where
    F: FnOnce() -> Result<T, ServiceError> + Send + 'static,
    T: Send + 'static,
{
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ServiceError::Internal(format!("worker failed: {e}")))?
}

fn json_body(body: String) -> Response {
    ([(header::CONTENT_TYPE, "application/json")], body).into_response()
}

fn json<T: Serialize>(v: &T) -> Result<Response, ServiceError> {
    serde_json::to_string(v)
        .map(json_body)
        .map_err(|e| ServiceError::Internal(e.to_string()))
}

pub fn router(state: Shared) -> Router {
    Router::new()
        .route("/api/health", get(health))
        .route("/api/variables", get(variables))
        .route("/api/patients", get(list_patients).post(create_patient))
        .route("/api/patients/{id}", get(patient))
        .route("/api/patients/{id}/trajectory", get(trajectory))
        .route("/api/patients/{id}/recommendations", get(recommendations))
        .route("/api/patients/{id}/observations", post(add_observation))
        .route("/api/orders", post(create_order))
        .route("/api/orders/{id}", get(order))
        .route("/api/orders/{id}/fulfill", post(fulfill))
        .fallback(|uri: Uri| async move {
            ServiceError::NotFound {
                what: "route",
                id: uri.path().to_string(),
            }
        })
        .with_state(state)
}

async fn health(State(s): State<Shared>) -> Result<Response, ServiceError> {
    json(&serde_json::json!({
        "status": "ok",
        "model": s.model.kind(),
        "variables": s.vocab.len(),
    }))
}

async fn variables(State(s): State<Shared>) -> Result<Response, ServiceError> {
    json(&s.vocab)
}

async fn list_patients(State(s): State<Shared>) -> Result<Response, ServiceError> {
    json(&blocking(move || s.list_patients()).await?)
}

async fn patient(State(s): State<Shared>, Path(id): Path<String>) -> Result<Response, ServiceError> {
    json(&blocking(move || s.patient_detail(&id)).await?)
}

async fn create_patient(State(s): State<Shared>, ApiJson(req): ApiJson<NewPatient>) -> Result<Response, ServiceError> {
    json(&blocking(move || s.create_patient(req)).await?)
}

#[derive(Debug, Deserialize)]
struct TrajectoryQuery {
    hypothetical: Option<String>,
}

async fn trajectory(
    State(s): State<Shared>,
    Path(id): Path<String>,
    Query(q): Query<TrajectoryQuery>,
) -> Result<Response, ServiceError> {
    let names: Vec<String> = q
        .hypothetical
        .unwrap_or_default()
        .split(',')
        .map(str::trim)
        .filter(|n| !n.is_empty())
        .map(String::from)
        .collect();
    Ok(json_body(blocking(move || s.trajectory(&id, &names)).await?))
}

#[derive(Debug, Deserialize)]
struct TopQuery {
    top: Option<String>,
}

async fn recommendations(
    State(s): State<Shared>,
    Path(id): Path<String>,
    Query(q): Query<TopQuery>,
) -> Result<Response, ServiceError> {
    let top = q
        .top
        .map(|t| {
            t.parse::<usize>()
                .map_err(|_| ServiceError::InvalidValue(format!("top must be a non-negative integer, got `{t}`")))
        })
        .transpose()?;
    json(&blocking(move || s.recommendations(&id, top)).await?)
}

async fn add_observation(
    State(s): State<Shared>,
    Path(id): Path<String>,
    ApiJson(req): ApiJson<NewObservation>,
) -> Result<Response, ServiceError> {
    json(&blocking(move || s.add_observation(&id, req)).await?)
}

async fn create_order(State(s): State<Shared>, ApiJson(req): ApiJson<NewOrder>) -> Result<Response, ServiceError> {
    json(&blocking(move || s.create_order(req)).await?)
}

fn order_id(raw: &str) -> Result<i64, ServiceError> {
    raw.parse().map_err(|_| ServiceError::NotFound {
        what: "order",
        id: raw.to_string(),
    })
}

async fn order(State(s): State<Shared>, Path(id): Path<String>) -> Result<Response, ServiceError> {
    let id = order_id(&id)?;
    json(&blocking(move || s.get_order(id)).await?)
}

async fn fulfill(
    State(s): State<Shared>,
    Path(id): Path<String>,
    ApiJson(req): ApiJson<Fulfillment>,
) -> Result<Response, ServiceError> {
    let id = order_id(&id)?;
    json(&blocking(move || s.fulfill_order(id, req)).await?)
}
