//! JSON API over a [`QueueStore`].
//!
//! | method | path                       | body                          |
//! |--------|----------------------------|-------------------------------|
//! | GET    | `/api/queue`               | `?status=&page=&page_size=`   |
//! | GET    | `/api/items/{id}`          |                               |
//! | POST   | `/api/items/{id}/labels`   | five 0/1 fields + `annotator` |
//! | POST   | `/api/items/{id}/match`    | `report_id` (+ `annotator`)   |
//! | GET    | `/api/stats`               |                               |
//!
//! Reads share a lock. Writes take it exclusively and run on the blocking
//! pool because each one waits for the log to reach the disk; the response
//! is sent only after that.

use std::net::SocketAddr;
use std::sync::{Arc, RwLock};

use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::Utc;
use cxrlabel::labels::Flags;
use cxrlabel::review::{ItemStatus, Page, QueueStats, QueueStore, ReviewError, ReviewItem};
use serde::{Deserialize, Serialize};

pub type SharedStore = Arc<RwLock<QueueStore>>;

pub const DEFAULT_PAGE_SIZE: usize = 50;

#[derive(Debug, Serialize, Deserialize, PartialEq, Eq)]
pub struct ErrorBody {
    pub error: String,
    pub message: String,
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> ApiError {
        ApiError {
            status,
            code,
            message: message.into(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = ErrorBody {
            error: self.code.to_owned(),
            message: self.message,
        };
        (self.status, Json(body)).into_response()
    }
}

impl From<ReviewError> for ApiError {
    fn from(e: ReviewError) -> ApiError {
        let (status, code) = match &e {
            ReviewError::NotFound(_) => (StatusCode::NOT_FOUND, "not_found"),
            ReviewError::AlreadyResolved(_) => (StatusCode::CONFLICT, "already_resolved"),
            ReviewError::InvariantViolation(_) => (StatusCode::UNPROCESSABLE_ENTITY, "invariant_violation"),
            ReviewError::WrongKind { .. } => (StatusCode::CONFLICT, "wrong_kind"),
            ReviewError::NotCandidate(_) => (StatusCode::UNPROCESSABLE_ENTITY, "not_candidate"),
            ReviewError::NotPending => (StatusCode::UNPROCESSABLE_ENTITY, "not_pending"),
            ReviewError::Store(_) => (StatusCode::INTERNAL_SERVER_ERROR, "store_write_failed"),
        };
        if status.is_server_error() {
            tracing::error!(error = %e, "review write failed");
        }
        ApiError::new(status, code, e.to_string())
    }
}

impl From<JsonRejection> for ApiError {
    fn from(r: JsonRejection) -> ApiError {
        ApiError::new(StatusCode::BAD_REQUEST, "bad_request", r.body_text())
    }
}

impl From<QueryRejection> for ApiError {
    fn from(r: QueryRejection) -> ApiError {
        ApiError::new(StatusCode::BAD_REQUEST, "bad_request", r.body_text())
    }
}

#[derive(Debug, Deserialize)]
pub struct QueueQuery {
    pub status: Option<String>,
    pub page: Option<usize>,
    pub page_size: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelsBody {
    pub chest_wall: u8,
    pub pleura: u8,
    pub parenchyma: u8,
    pub cardio: u8,
    pub abnormal: u8,
    pub annotator: String,
}

impl LabelsBody {
    fn flags(&self) -> Result<Flags, ApiError> {
        let bits = [self.chest_wall, self.pleura, self.parenchyma, self.cardio, self.abnormal];
        if bits.iter().any(|&b| b > 1) {
            return Err(ApiError::new(
                StatusCode::UNPROCESSABLE_ENTITY,
                "invariant_violation",
                "label values must be 0 or 1",
            ));
        }
        Ok(Flags::from_bits(bits))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatchBody {
    pub report_id: String,
    /// Optional so the documented single-field body works.
    #[serde(default)]
    pub annotator: Option<String>,
}

pub fn router(store: SharedStore) -> Router {
    Router::new()
        .route("/api/queue", get(list_queue))
        .route("/api/items/{id}", get(get_item))
        .route("/api/items/{id}/labels", post(submit_labels))
        .route("/api/items/{id}/match", post(submit_match))
        .route("/api/stats", get(stats))
        .layer(tower_http::cors::CorsLayer::permissive())
        .with_state(store)
}

fn read(store: &SharedStore) -> std::sync::RwLockReadGuard<'_, QueueStore> {
    store.read().unwrap_or_else(|p| p.into_inner())
}

async fn list_queue(
    State(store): State<SharedStore>,
    query: Result<Query<QueueQuery>, QueryRejection>,
) -> Result<Json<Page>, ApiError> {
    let Query(q) = query?;
    let status = match q.status.as_deref() {
        None | Some("") => None,
        Some(s) => Some(
            s.parse::<ItemStatus>()
                .map_err(|m| ApiError::new(StatusCode::BAD_REQUEST, "bad_request", m))?,
        ),
    };
    let page = q.page.unwrap_or(1);
    let page_size = q.page_size.unwrap_or(DEFAULT_PAGE_SIZE);
    Ok(Json(read(&store).list(status, page, page_size)))
}

async fn get_item(State(store): State<SharedStore>, Path(id): Path<String>) -> Result<Json<ReviewItem>, ApiError> {
    read(&store)
        .get(&id)
        .cloned()
        .map(Json)
        .ok_or_else(|| ReviewError::NotFound(id).into())
}

async fn stats(State(store): State<SharedStore>) -> Json<QueueStats> {
    Json(read(&store).stats())
}

/// Run a mutation on the blocking pool under the write lock.
async fn write<T: Send + 'static>(
    store: SharedStore,
    f: impl FnOnce(&mut QueueStore) -> Result<T, ReviewError> + Send + 'static,
) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(move || {
        let mut guard = store.write().unwrap_or_else(|p| p.into_inner());
        f(&mut guard)
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?
    .map_err(ApiError::from)
}

async fn submit_labels(
    State(store): State<SharedStore>,
    Path(id): Path<String>,
    body: Result<Json<LabelsBody>, JsonRejection>,
) -> Result<Json<ReviewItem>, ApiError> {
    let Json(body) = body?;
    let flags = body.flags()?;
    let item = write(store, move |s| s.submit_labels(&id, flags, &body.annotator, Utc::now())).await?;
    tracing::info!(item = %item.item_id, annotator = ?item.annotator, "labels submitted");
    Ok(Json(item))
}

async fn submit_match(
    State(store): State<SharedStore>,
    Path(id): Path<String>,
    body: Result<Json<MatchBody>, JsonRejection>,
) -> Result<Json<ReviewItem>, ApiError> {
    let Json(body) = body?;
    let annotator = body.annotator.unwrap_or_else(|| "anonymous".to_owned());
    let item = write(store, move |s| s.submit_match(&id, &body.report_id, &annotator, Utc::now())).await?;
    tracing::info!(item = %item.item_id, "conflict resolved");
    Ok(Json(item))
}

#[derive(Debug, thiserror::Error)]
pub enum ServeError {
    #[error("cannot bind {addr}: {source}")]
    BindFailed {
        addr: SocketAddr,
        source: std::io::Error,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Serve until `shutdown` resolves.
pub async fn serve_with_shutdown(
    store: SharedStore,
    addr: SocketAddr,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> Result<(), ServeError> {
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|source| ServeError::BindFailed { addr, source })?;
    tracing::info!(addr = %listener.local_addr()?, "review service listening");
    axum::serve(listener, router(store))
        .with_graceful_shutdown(shutdown)
        .await?;
    Ok(())
}

/// Serve until Ctrl-C.
pub async fn serve(store: SharedStore, addr: SocketAddr) -> Result<(), ServeError> {
    serve_with_shutdown(store, addr, async {
        let _ = tokio::signal::ctrl_c().await;
    })
    .await
}
