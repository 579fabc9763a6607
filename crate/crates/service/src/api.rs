//! HTTP surface of the case store.

use std::sync::Arc;

use axum::Router;
use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{StatusCode, header};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Json;
use corax_core::CaseBundleFile;
use corax_core::metrics::MetricsReport;
use corax_core::referral::{Actor, Decision, Referral, ReviewStatus, RoiMode};
use serde::{Deserialize, Serialize};

use crate::ServiceError;
use crate::store::Store;

#[derive(Debug, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub field: Option<String>,
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let (status, code, field) = match &self {
            ServiceError::NotFound(_) => (StatusCode::NOT_FOUND, "not_found", None),
            ServiceError::BadRequest(_) => (StatusCode::BAD_REQUEST, "bad_request", None),
            ServiceError::Schema { field, .. } => {
                (StatusCode::UNPROCESSABLE_ENTITY, "validation_error", Some(field.clone()))
            }
            ServiceError::Core(e) => match e {
                corax_core::CoraxError::Validation { field, .. } => {
                    (StatusCode::UNPROCESSABLE_ENTITY, "validation_error", Some(field.clone()))
                }
                corax_core::CoraxError::Conflict(_) => (StatusCode::CONFLICT, "conflict", None),
                corax_core::CoraxError::Parameter(_) => (StatusCode::BAD_REQUEST, "bad_request", None),
                _ => (StatusCode::INTERNAL_SERVER_ERROR, "internal", None),
            },
            _ => (StatusCode::INTERNAL_SERVER_ERROR, "internal", None),
        };
        if status.is_server_error() {
            tracing::error!("{self}");
        }
        let body = ErrorBody {
            code: code.into(),
            message: self.to_string(),
            field,
        };
        (status, Json(body)).into_response()
    }
}

type ApiResult<T> = Result<T, ServiceError>;

/// Runs a store operation off the async executor.
async fn blocking<T: Send + 'static>(
    store: &Arc<Store>,
    f: impl FnOnce(&Store) -> ApiResult<T> + Send + 'static,
) -> ApiResult<T> {
    let store = Arc::clone(store);
    tokio::task::spawn_blocking(move || f(&store))
        .await
        .map_err(|e| ServiceError::Internal(e.to_string()))?
}

/// Referral as served: `roi_path` points at the PNG endpoint.
fn with_url(mut r: Referral) -> Referral {
    r.roi_path = Some(format!("/referrals/{}/roi.png", r.referral_id));
    r
}

#[derive(Serialize)]
struct Created {
    case_id: String,
}

async fn post_case(State(store): State<Arc<Store>>, body: Bytes) -> ApiResult<Response> {
    let de = &mut serde_json::Deserializer::from_slice(&body);
    let file: CaseBundleFile = serde_path_to_error::deserialize(de).map_err(|e| ServiceError::Schema {
        field: e.path().to_string(),
        message: e.inner().to_string(),
    })?;
    let ingested = blocking(&store, move |s| s.ingest(file)).await?;
    let status = if ingested.created { StatusCode::CREATED } else { StatusCode::OK };
    Ok((status, Json(Created { case_id: ingested.case_id })).into_response())
}

#[derive(Deserialize)]
struct AnalyzeQuery {
    roi_mode: Option<String>,
}

async fn analyze(
    State(store): State<Arc<Store>>,
    Path(id): Path<String>,
    Query(q): Query<AnalyzeQuery>,
) -> ApiResult<Response> {
    let mode = q
        .roi_mode
        .map(|m| m.parse::<RoiMode>())
        .transpose()
        .map_err(|e| ServiceError::BadRequest(e.to_string()))?;
    let mut analysis = blocking(&store, move |s| s.analyze(&id, mode)).await?;
    analysis.referrals = analysis.referrals.into_iter().map(with_url).collect();
    Ok(Json(analysis).into_response())
}

async fn case_referrals(State(store): State<Arc<Store>>, Path(id): Path<String>) -> ApiResult<Json<Vec<Referral>>> {
    let list = store.case_referrals(&id)?;
    Ok(Json(list.into_iter().map(with_url).collect()))
}

#[derive(Deserialize)]
struct QueueQuery {
    status: Option<String>,
}

async fn queue(State(store): State<Arc<Store>>, Query(q): Query<QueueQuery>) -> ApiResult<Json<Vec<Referral>>> {
    let status = q
        .status
        .map(|s| serde_json::from_value::<ReviewStatus>(serde_json::Value::String(s.clone())))
        .transpose()
        .map_err(|_| ServiceError::BadRequest("status must be pending|accepted|rejected".into()))?;
    Ok(Json(store.queue(status).into_iter().map(with_url).collect()))
}

#[derive(Deserialize)]
struct DecisionBody {
    decision: Decision,
    #[serde(default = "human")]
    actor: Actor,
}

fn human() -> Actor {
    Actor::Human
}

async fn post_decision(
    State(store): State<Arc<Store>>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<Json<Referral>> {
    let de = &mut serde_json::Deserializer::from_slice(&body);
    let body: DecisionBody = serde_path_to_error::deserialize(de).map_err(|e| ServiceError::Schema {
        field: e.path().to_string(),
        message: e.inner().to_string(),
    })?;
    let r = blocking(&store, move |s| s.decide(&id, body.decision, body.actor)).await?;
    Ok(Json(with_url(r)))
}

fn png(bytes: Vec<u8>) -> Response {
    ([(header::CONTENT_TYPE, "image/png")], bytes).into_response()
}

async fn case_image(State(store): State<Arc<Store>>, Path(id): Path<String>) -> ApiResult<Response> {
    Ok(png(blocking(&store, move |s| s.case_image_png(&id)).await?))
}

async fn roi_png(State(store): State<Arc<Store>>, Path(id): Path<String>) -> ApiResult<Response> {
    Ok(png(blocking(&store, move |s| s.roi_png(&id)).await?))
}

async fn metrics(State(store): State<Arc<Store>>) -> ApiResult<Json<MetricsReport>> {
    Ok(Json(blocking(&store, |s| s.metrics()).await?))
}

async fn cdf_ru(State(store): State<Arc<Store>>) -> ApiResult<Response> {
    let report = blocking(&store, |s| s.metrics()).await?;
    let csv = MetricsReport::cdf_csv(&report.cdf_ru);
    Ok(([(header::CONTENT_TYPE, "text/csv")], csv).into_response())
}

pub fn router(store: Arc<Store>) -> Router {
    Router::new()
        .route("/cases", post(post_case))
        .route("/cases/{id}/analyze", post(analyze))
        .route("/cases/{id}/referrals", get(case_referrals))
        .route("/cases/{id}/image", get(case_image))
        .route("/referrals", get(queue))
        .route("/referrals/{id}/decision", post(post_decision))
        .route("/referrals/{id}/roi.png", get(roi_png))
        .route("/metrics", get(metrics))
        .route("/metrics/cdf/ru", get(cdf_ru))
        .with_state(store)
}
