//! HTTP moderation service over a resident guardrail model.
//!
//! The model lives in memory behind an atomically swappable snapshot, so
//! request handling is lock-light and a reload never exposes a half-loaded
//! model: the incoming bundle is fully loaded and validated off the request
//! path, then published in one swap. Requests always see either the old or
//! the new model, never an error, so hot swaps produce no 5xx responses.
//!
//! Endpoints:
//! - `POST /v1/moderate`  body `{"prompt": "...", "request_id": "..."?}`
//! - `GET  /v1/health`
//! - `POST /v1/reload`    body `{"bundle": "<path>"}` (admin)

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Instant;

use axum::extract::rejection::JsonRejection;
use axum::extract::{DefaultBodyLimit, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use parking_lot::RwLock;
use serde::{Deserialize, Serialize};

use moje_core::corpus::Label;
use moje_core::modelstore::ModelBundle;
use moje_core::moje::{CombineRule, MojeModel};

pub const DEFAULT_MAX_PROMPT_BYTES: usize = 32_768;

/// Envelope slack for the JSON body around the prompt itself.
const BODY_OVERHEAD_BYTES: usize = 16_384;

#[derive(Debug, Clone, Copy)]
pub struct ServeOptions {
    pub max_prompt_bytes: usize,
}

impl Default for ServeOptions {
    fn default() -> Self {
        Self {
            max_prompt_bytes: DEFAULT_MAX_PROMPT_BYTES,
        }
    }
}

/// An immutable model snapshot plus its content version tag.
#[derive(Debug)]
pub struct ServingModel {
    pub model: MojeModel,
    pub version: String,
}

impl ServingModel {
    pub fn from_bundle(bundle: ModelBundle) -> Self {
        let version = bundle.version_tag();
        Self {
            model: bundle.model,
            version,
        }
    }

    pub fn load(path: &std::path::Path) -> moje_core::Result<Self> {
        Ok(Self::from_bundle(ModelBundle::load(path)?))
    }
}

pub struct AppState {
    slot: RwLock<Arc<ServingModel>>,
    max_prompt_bytes: usize,
    request_seq: AtomicU64,
}

impl AppState {
    pub fn new(model: ServingModel, options: ServeOptions) -> Arc<Self> {
        Arc::new(Self {
            slot: RwLock::new(Arc::new(model)),
            max_prompt_bytes: options.max_prompt_bytes,
            request_seq: AtomicU64::new(0),
        })
    }

    pub fn from_bundle_path(
        path: &std::path::Path,
        options: ServeOptions,
    ) -> moje_core::Result<Arc<Self>> {
        Ok(Self::new(ServingModel::load(path)?, options))
    }

    /// Cheap snapshot grab; requests hold only the Arc, never the lock.
    pub fn current(&self) -> Arc<ServingModel> {
        self.slot.read().clone()
    }

    /// Atomic publish of a fully validated model.
    pub fn swap(&self, model: ServingModel) {
        *self.slot.write() = Arc::new(model);
    }

    pub fn max_prompt_bytes(&self) -> usize {
        self.max_prompt_bytes
    }
}

#[derive(Debug, Deserialize)]
pub struct ModerationRequest {
    pub prompt: String,
    #[serde(default)]
    pub request_id: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModerationResponse {
    pub label: Label,
    pub score: f64,
    pub rule: CombineRule,
    pub per_expert: BTreeMap<String, f64>,
    pub model_version: String,
    pub latency_us: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub request_id: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct HealthResponse {
    pub status: String,
    pub model_version: String,
}

#[derive(Debug, Deserialize)]
pub struct ReloadRequest {
    pub bundle: PathBuf,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ReloadResponse {
    pub model_version: String,
}

#[derive(Debug, Serialize)]
struct ErrorBody {
    error: String,
}

fn error_response(status: StatusCode, error: impl Into<String>) -> Response {
    (
        status,
        Json(ErrorBody {
            error: error.into(),
        }),
    )
        .into_response()
}

fn rejection_response(rejection: JsonRejection) -> Response {
    // Payload-size rejections keep 413; everything else about the body is a
    // plain bad request.
    let status = if rejection.status() == StatusCode::PAYLOAD_TOO_LARGE {
        StatusCode::PAYLOAD_TOO_LARGE
    } else {
        StatusCode::BAD_REQUEST
    };
    error_response(status, rejection.body_text())
}

pub fn router(state: Arc<AppState>) -> Router {
    let body_limit = state.max_prompt_bytes + BODY_OVERHEAD_BYTES;
    Router::new()
        .route("/v1/moderate", post(moderate))
        .route("/v1/health", get(health))
        .route("/v1/reload", post(reload))
        .layer(DefaultBodyLimit::max(body_limit))
        .with_state(state)
}

async fn moderate(
    State(state): State<Arc<AppState>>,
    payload: Result<Json<ModerationRequest>, JsonRejection>,
) -> Response {
    let started = Instant::now();
    let Json(request) = match payload {
        Ok(p) => p,
        Err(rejection) => return rejection_response(rejection),
    };
    if request.prompt.len() > state.max_prompt_bytes {
        return error_response(
            StatusCode::PAYLOAD_TOO_LARGE,
            format!(
                "prompt is {} bytes; limit is {}",
                request.prompt.len(),
                state.max_prompt_bytes
            ),
        );
    }

    let snapshot = state.current();
    let verdict = match snapshot.model.infer(&request.prompt) {
        Ok(v) => v,
        Err(e) => {
            return error_response(
                StatusCode::INTERNAL_SERVER_ERROR,
                format!("model integrity failure: {e}"),
            )
        }
    };
    let latency_us = started.elapsed().as_micros() as u64;
    let seq = state.request_seq.fetch_add(1, Ordering::Relaxed);
    let id = request
        .request_id
        .clone()
        .unwrap_or_else(|| format!("req-{seq}"));
    tracing::info!(
        target: "moje::request",
        id = %id,
        label = %verdict.label,
        score = verdict.score,
        latency_us,
        "moderated"
    );

    Json(ModerationResponse {
        label: verdict.label,
        score: verdict.score,
        rule: verdict.rule,
        per_expert: verdict.per_expert,
        model_version: snapshot.version.clone(),
        latency_us,
        request_id: request.request_id,
    })
    .into_response()
}

async fn health(State(state): State<Arc<AppState>>) -> Response {
    Json(HealthResponse {
        status: "ok".to_owned(),
        model_version: state.current().version.clone(),
    })
    .into_response()
}

async fn reload(
    State(state): State<Arc<AppState>>,
    payload: Result<Json<ReloadRequest>, JsonRejection>,
) -> Response {
    let Json(request) = match payload {
        Ok(p) => p,
        Err(rejection) => return rejection_response(rejection),
    };
    let path = request.bundle.clone();
    let loaded = tokio::task::spawn_blocking(move || ServingModel::load(&path)).await;
    match loaded {
        Ok(Ok(model)) => {
            let version = model.version.clone();
            state.swap(model);
            tracing::info!(target: "moje::reload", version = %version, "model swapped");
            Json(ReloadResponse {
                model_version: version,
            })
            .into_response()
        }
        Ok(Err(e)) => {
            tracing::warn!(target: "moje::reload", error = %e, "reload rejected; previous model retained");
            error_response(StatusCode::BAD_REQUEST, format!("reload rejected: {e}"))
        }
        Err(join_err) => error_response(
            StatusCode::INTERNAL_SERVER_ERROR,
            format!("reload task failed: {join_err}"),
        ),
    }
}

/// Serves until `shutdown` resolves, then drains in-flight requests.
pub async fn serve(
    listener: tokio::net::TcpListener,
    state: Arc<AppState>,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(state))
        .with_graceful_shutdown(shutdown)
        .await
}
