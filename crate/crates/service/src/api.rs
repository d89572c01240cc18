use std::sync::Arc;

use axum::extract::{Path, Query, Request, State};
use axum::http::{header, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use iul_core::jsonl::to_jsonl_string;
use iul_core::review::{Decision, FlaggedPrediction, QueueQuery, QueueSort, ReviewError, ReviewStatus, ReviewStore};
use iul_core::Subcategory;

pub const API_PREFIX: &str = "/api/v1";

#[derive(Clone)]
pub struct ApiState {
    pub store: Arc<ReviewStore>,
    token: Arc<str>,
}

impl ApiState {
    pub fn new(store: Arc<ReviewStore>, token: impl Into<String>) -> Self {
        Self { store, token: Arc::from(token.into()) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    pub message: String,
    /// Current state of the item on a conflict, so clients can reload it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub item: Option<iul_core::review::ReviewItem>,
}

struct ApiError(StatusCode, ErrorBody);

impl ApiError {
    fn new(status: StatusCode, error: &str, message: impl Into<String>) -> Self {
        Self(status, ErrorBody { error: error.into(), message: message.into(), item: None })
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(self.1)).into_response()
    }
}

fn review_error(store: &ReviewStore, e: ReviewError) -> ApiError {
    match &e {
        ReviewError::NotFound(_) => ApiError::new(StatusCode::NOT_FOUND, "not_found", e.to_string()),
        ReviewError::Conflict { item_id, .. } => {
            let mut err = ApiError::new(StatusCode::CONFLICT, "conflict", e.to_string());
            err.1.item = store.get(item_id);
            err
        }
        ReviewError::Validation(_) => ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "validation", e.to_string()),
        ReviewError::BadRequest(_) => ApiError::new(StatusCode::BAD_REQUEST, "bad_request", e.to_string()),
        ReviewError::Storage { .. } | ReviewError::Corrupt { .. } => {
            log::error!("review storage failure: {e}");
            ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "storage", e.to_string())
        }
    }
}

#[derive(Debug, Default, Deserialize)]
struct QueueParams {
    status: Option<String>,
    subcategory: Option<String>,
    sort: Option<String>,
    page: Option<usize>,
    page_size: Option<usize>,
}

impl QueueParams {
    fn to_query(&self) -> Result<QueueQuery, ApiError> {
        let bad = |m: String| ApiError::new(StatusCode::BAD_REQUEST, "bad_request", m);
        let defaults = QueueQuery::default();
        let status = self.status.as_deref().map(str::parse::<ReviewStatus>).transpose().map_err(|e| bad(e.to_string()))?;
        let subcategory = self
            .subcategory
            .as_deref()
            .map(|s| s.parse::<Subcategory>().map_err(|e| bad(e.to_string())))
            .transpose()?;
        let sort = match self.sort.as_deref() {
            None | Some("score") => QueueSort::Score,
            Some("created") => QueueSort::Created,
            Some(other) => return Err(bad(format!("unknown sort `{other}`; use score or created"))),
        };
        Ok(QueueQuery {
            status,
            subcategory,
            sort,
            page: self.page.unwrap_or(defaults.page),
            page_size: self.page_size.unwrap_or(defaults.page_size),
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnqueueRequest {
    pub predictions: Vec<FlaggedPrediction>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnqueueResponse {
    pub enqueued: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecisionRequest {
    pub decision: Decision,
    pub reviewer_id: String,
    #[serde(default)]
    pub overwrite: bool,
}

#[derive(Debug, Default, Deserialize)]
struct ExportParams {
    since: Option<String>,
}

async fn queue(State(s): State<ApiState>, Query(params): Query<QueueParams>) -> Result<Response, ApiError> {
    let query = params.to_query()?;
    let page = s.store.list_queue(&query).map_err(|e| review_error(&s.store, e))?;
    Ok(Json(page).into_response())
}

async fn enqueue(State(s): State<ApiState>, Json(req): Json<EnqueueRequest>) -> Result<Response, ApiError> {
    let enqueued = s.store.enqueue_flagged(&req.predictions).map_err(|e| review_error(&s.store, e))?;
    Ok((StatusCode::CREATED, Json(EnqueueResponse { enqueued })).into_response())
}

async fn item(State(s): State<ApiState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    match s.store.get(&id) {
        Some(item) => Ok(Json(item).into_response()),
        None => Err(review_error(&s.store, ReviewError::NotFound(id))),
    }
}

async fn decide(
    State(s): State<ApiState>,
    Path(id): Path<String>,
    Json(req): Json<DecisionRequest>,
) -> Result<Response, ApiError> {
    let item = s
        .store
        .submit_decision(&id, &req.decision, &req.reviewer_id, req.overwrite)
        .map_err(|e| review_error(&s.store, e))?;
    Ok(Json(item).into_response())
}

async fn export(State(s): State<ApiState>, Query(params): Query<ExportParams>) -> Result<Response, ApiError> {
    let since = params
        .since
        .as_deref()
        .map(|t| {
            DateTime::parse_from_rfc3339(t).map(|d| d.with_timezone(&Utc)).map_err(|e| {
                ApiError::new(StatusCode::BAD_REQUEST, "bad_request", format!("`since` is not an RFC 3339 time: {e}"))
            })
        })
        .transpose()?;
    let rows = s.store.export_decisions(since).map_err(|e| review_error(&s.store, e))?;
    Ok(([(header::CONTENT_TYPE, "application/x-ndjson")], to_jsonl_string(&rows)).into_response())
}

async fn health() -> &'static str {
    "ok"
}

async fn require_token(State(s): State<ApiState>, req: Request, next: Next) -> Response {
    let presented = req
        .headers()
        .get(header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "));
    match presented {
        Some(t) if t.as_bytes() == s.token.as_bytes() => next.run(req).await,
        _ => ApiError::new(StatusCode::UNAUTHORIZED, "unauthorized", "missing or wrong bearer token").into_response(),
    }
}

/// The review API. Everything except `/health` requires the bearer token.
pub fn router(state: ApiState) -> Router {
    let protected = Router::new()
        .route("/queue", get(queue))
        .route("/items", post(enqueue))
        .route("/items/{id}", get(item))
        .route("/items/{id}/decision", post(decide))
        .route("/export", get(export))
        .route_layer(middleware::from_fn_with_state(state.clone(), require_token));
    Router::new().nest(API_PREFIX, protected.route("/health", get(health))).with_state(state)
}
