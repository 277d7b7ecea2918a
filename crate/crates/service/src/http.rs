//! JSON API.

use std::sync::Arc;

use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use boxrec_core::catalog::{ClothingType, Occasion};
use serde::Deserialize;
use serde_json::json;
use tower_http::trace::TraceLayer;

use crate::app::Service;
use crate::error::ServiceError;
use crate::session::Constraints;

impl ServiceError {
    pub fn status(&self) -> StatusCode {
        use boxrec_core::Error as Core;
        match self {
            ServiceError::SessionNotFound(_) => StatusCode::NOT_FOUND,
            ServiceError::BadRequest(_) | ServiceError::UnknownProduct(_) => StatusCode::BAD_REQUEST,
            ServiceError::WrongState(_) => StatusCode::CONFLICT,
            ServiceError::NoCompatibleOutfits | ServiceError::BudgetTooLow { .. } => StatusCode::UNPROCESSABLE_ENTITY,
            ServiceError::Core(Core::UnknownItem(_) | Core::Invalid(_) | Core::Parse(_)) => StatusCode::BAD_REQUEST,
            ServiceError::Core(_) | ServiceError::Store(_) | ServiceError::Integrity(_) => {
                StatusCode::INTERNAL_SERVER_ERROR
            }
        }
    }
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let status = self.status();
        if status.is_server_error() {
            tracing::error!(error = %self, "request failed");
        }
        let body = json!({ "error": self.code(), "message": self.to_string() });
        (status, Json(body)).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ServiceError>;
type AppState = Arc<Service>;

#[derive(Deserialize)]
struct OccasionBody {
    occasion: Occasion,
}

#[derive(Deserialize)]
struct ItemsQuery {
    #[serde(rename = "type")]
    kind: ClothingType,
    #[serde(default)]
    page: usize,
}

#[derive(Deserialize)]
struct ChoicesBody {
    #[serde(rename = "type")]
    kind: ClothingType,
    items: Vec<String>,
}

#[derive(Deserialize)]
struct FeedbackBody {
    product: String,
    liked: bool,
}

pub fn router(service: Arc<Service>) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/occasion", post(set_occasion))
        .route("/sessions/{id}/items", get(items))
        .route("/sessions/{id}/choices", post(set_choices))
        .route("/sessions/{id}/constraints", post(set_constraints))
        .route("/sessions/{id}/recommend", post(recommend))
        .route("/sessions/{id}/recommendation", get(recommendation))
        .route("/sessions/{id}/feedback", post(feedback))
        .layer(TraceLayer::new_for_http())
        .with_state(service)
}

async fn health(State(svc): State<AppState>) -> Json<serde_json::Value> {
    Json(json!({ "status": "ok", "items": svc.catalog().len() }))
}

async fn create_session(State(svc): State<AppState>) -> Result<(StatusCode, Json<crate::session::Session>), ServiceError> {
    Ok((StatusCode::CREATED, Json(svc.create_session()?)))
}

async fn get_session(State(svc): State<AppState>, Path(id): Path<String>) -> ApiResult<crate::session::Session> {
    Ok(Json(svc.session(&id)?))
}

async fn set_occasion(
    State(svc): State<AppState>,
    Path(id): Path<String>,
    Json(body): Json<OccasionBody>,
) -> ApiResult<crate::session::Session> {
    Ok(Json(svc.set_occasion(&id, body.occasion)?))
}

async fn items(
    State(svc): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<ItemsQuery>,
) -> ApiResult<crate::app::ItemPage> {
    Ok(Json(svc.sample_items(&id, q.kind, q.page)?))
}

async fn set_choices(
    State(svc): State<AppState>,
    Path(id): Path<String>,
    Json(body): Json<ChoicesBody>,
) -> ApiResult<crate::session::Session> {
    Ok(Json(svc.set_choices(&id, body.kind, body.items)?))
}

async fn set_constraints(
    State(svc): State<AppState>,
    Path(id): Path<String>,
    Json(body): Json<Constraints>,
) -> ApiResult<crate::session::Session> {
    Ok(Json(svc.set_constraints(&id, body)?))
}

async fn recommend(State(svc): State<AppState>, Path(id): Path<String>) -> ApiResult<crate::session::Recommendation> {
    // scoring is CPU-bound
    let rec = tokio::task::spawn_blocking(move || svc.recommend(&id))
        .await
        .map_err(|e| ServiceError::Integrity(format!("recommend task failed: {e}")))??;
    Ok(Json(rec))
}

async fn recommendation(
    State(svc): State<AppState>,
    Path(id): Path<String>,
) -> ApiResult<crate::app::RecommendationView> {
    Ok(Json(svc.recommendation(&id)?))
}

async fn feedback(
    State(svc): State<AppState>,
    Path(id): Path<String>,
    Json(body): Json<FeedbackBody>,
) -> ApiResult<crate::session::HitRatioReport> {
    Ok(Json(svc.record_feedback(&id, &body.product, body.liked)?))
}
