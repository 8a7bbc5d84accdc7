//! Read-only HTTP endpoint over loaded artifacts.

use std::net::SocketAddr;
use std::sync::Arc;

use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use hybrec_core::recommend::Recommender;
use hybrec_core::CorpusStore;
use serde::Deserialize;
use serde_json::json;

use crate::api::{self, ApiError, RecommendationsResponse};

/// Everything a request needs; immutable after startup.
pub struct ServiceState {
    pub store: CorpusStore,
    pub recommender: Recommender,
}

#[derive(Debug, Deserialize)]
pub struct ForPaperQuery {
    pub method: Option<String>,
    pub limit: Option<usize>,
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let msg = self.to_string();
        match self {
            ApiError::UnknownPaper(id) => (StatusCode::NOT_FOUND, Json(json!({ "error": msg, "paperId": id }))),
            ApiError::MissingVector { id, missing } => {
                let m: Vec<&str> = missing.iter().map(|m| m.as_str()).collect();
                (StatusCode::UNPROCESSABLE_ENTITY, Json(json!({ "error": msg, "paperId": id, "missing": m })))
            }
            ApiError::BadRequest(_) => (StatusCode::BAD_REQUEST, Json(json!({ "error": msg }))),
            ApiError::Internal(_) => (StatusCode::INTERNAL_SERVER_ERROR, Json(json!({ "error": msg }))),
        }
        .into_response()
    }
}

async fn health() -> Json<serde_json::Value> {
    Json(json!({ "status": "ok" }))
}

async fn for_paper(
    State(state): State<Arc<ServiceState>>,
    Path(id): Path<String>,
    Query(q): Query<ForPaperQuery>,
) -> Result<Json<RecommendationsResponse>, ApiError> {
    let method = api::parse_method(q.method.as_deref())?;
    let limit = q.limit.unwrap_or(api::DEFAULT_LIMIT);
    let list = api::recommend(&state.store, &state.recommender, &id, method, limit)?;
    Ok(Json(RecommendationsResponse { recommended_papers: api::items(&state.store, &list) }))
}

pub fn router(state: Arc<ServiceState>) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/recommendations/v1/papers/forpaper/{id}", get(for_paper))
        .with_state(state)
}

/// Serves until ctrl-c.
pub async fn serve(state: Arc<ServiceState>, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
