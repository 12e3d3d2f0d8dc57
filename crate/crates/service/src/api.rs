//! HTTP review API.

use std::sync::{Arc, Mutex};

use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{Query, Request, State};
use axum::http::{header, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use vqa_core::metrics::RatingRecord;

use crate::error::{ErrorEnvelope, ServiceError};
use crate::pipeline;
use crate::review::{ReviewError, ReviewStore};
use crate::run::RunDir;

pub struct AppState {
    run: RunDir,
    store: Mutex<ReviewStore>,
    token: Option<String>,
}

impl AppState {
    pub fn open(run: RunDir) -> Result<AppState, ServiceError> {
        let store = ReviewStore::open(&run)?;
        Ok(AppState {
            token: run.config.review.token.clone(),
            run,
            store: Mutex::new(store),
        })
    }
}

pub struct ApiError {
    status: StatusCode,
    body: ErrorEnvelope,
}

impl ApiError {
    fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            body: ErrorEnvelope {
                code: code.into(),
                message: message.into(),
            },
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

impl From<ReviewError> for ApiError {
    fn from(e: ReviewError) -> Self {
        let status = match e {
            ReviewError::UnknownAnnotator(_) => StatusCode::FORBIDDEN,
            ReviewError::UnknownSample(_) => StatusCode::NOT_FOUND,
            ReviewError::InvalidRating(_) => StatusCode::BAD_REQUEST,
            ReviewError::Store(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError::new(status, e.code(), e.to_string())
    }
}

impl From<ServiceError> for ApiError {
    fn from(e: ServiceError) -> Self {
        ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.code(), e.to_string())
    }
}

fn bad_request(message: String) -> ApiError {
    ApiError::new(StatusCode::BAD_REQUEST, "bad_request", message)
}

type Shared = Arc<AppState>;

#[derive(Debug, Deserialize)]
pub struct NextQuery {
    pub annotator: String,
}

async fn next(
    State(state): State<Shared>,
    query: Result<Query<NextQuery>, QueryRejection>,
) -> Result<impl IntoResponse, ApiError> {
    let Query(q) = query.map_err(|e| bad_request(e.body_text()))?;
    let store = state.store.lock().expect("review store lock");
    Ok(Json(store.next(&q.annotator)?))
}

async fn rating(
    State(state): State<Shared>,
    body: Result<Json<RatingRecord>, JsonRejection>,
) -> Result<impl IntoResponse, ApiError> {
    let Json(record) = body.map_err(|e| bad_request(e.body_text()))?;
    let mut store = state.store.lock().expect("review store lock");
    Ok(Json(store.submit(record)?))
}

async fn progress(State(state): State<Shared>) -> impl IntoResponse {
    Json(state.store.lock().expect("review store lock").progress())
}

async fn agreement(State(state): State<Shared>) -> impl IntoResponse {
    Json(state.store.lock().expect("review store lock").agreement())
}

async fn stats(State(state): State<Shared>) -> Result<impl IntoResponse, ApiError> {
    Ok(Json(pipeline::stats(&state.run)?))
}

async fn auth(State(state): State<Shared>, req: Request, next: Next) -> Response {
    if let Some(token) = &state.token {
        let given = req
            .headers()
            .get(header::AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "));
        if given != Some(token.as_str()) {
            return ApiError::new(StatusCode::UNAUTHORIZED, "unauthorized", "missing or invalid bearer token")
                .into_response();
        }
    }
    next.run(req).await
}

async fn fallback(req: Request) -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "not_found", format!("no route for {}", req.uri().path()))
}

pub fn router(state: Shared) -> Router {
    Router::new()
        .route("/review/next", get(next))
        .route("/review/rating", post(rating))
        .route("/review/progress", get(progress))
        .route("/review/agreement", get(agreement))
        .route("/stats", get(stats))
        .fallback(fallback)
        .layer(middleware::from_fn_with_state(state.clone(), auth))
        .with_state(state)
}

pub async fn serve(addr: &str, state: AppState) -> anyhow::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(Arc::new(state))).await?;
    Ok(())
}
