//! JSON-over-HTTP front end for reward scoring, advantages and selection.
//!
//! | method | path | body |
//! |--------|------|------|
//! | POST | `/v1/rewards` | `{items: [{task_id, response_text, lengths?}], config?}` |
//! | POST | `/v1/advantages` | `{groups: [{rewards}], epsilon?, beta?}` |
//! | POST | `/v1/select` | `{task_id, candidates}` |
//! | GET | `/health` | |
//!
//! Per-item failures are reported inline as `{"error": {...}}` so one bad
//! item never fails its batch. A body that does not parse is rejected with
//! 400 and the JSON path of the offending field.

pub mod wire;

use std::net::SocketAddr;
use std::sync::Arc;
use std::time::Instant;

use axum::body::Bytes;
use axum::extract::{FromRequest, Request, State};
use axum::http::StatusCode;
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::Serialize;
use sqlreward_core::exec::PoolStats;
use sqlreward_core::grpo::{group_advantages, GrpoConfig};
use sqlreward_core::reward::RewardConfig;
use sqlreward_core::select::{select_responses, SelectError};
use sqlreward_core::{Corpus, RewardEngine, RewardError, SelectionResult};

use wire::*;

struct Inner {
    engine: RewardEngine,
    corpus: Option<Corpus>,
    grpo: GrpoConfig,
}

/// Shared, read-only service state.
#[derive(Clone)]
pub struct AppState(Arc<Inner>);

impl AppState {
    /// `corpus` is `None` when it could not be loaded; the service then
    /// reports itself degraded and every task lookup fails.
    pub fn new(engine: RewardEngine, corpus: Option<Corpus>, grpo: GrpoConfig) -> Self {
        AppState(Arc::new(Inner { engine, corpus, grpo }))
    }

    pub fn engine(&self) -> &RewardEngine {
        &self.0.engine
    }

    pub fn corpus(&self) -> Option<&Corpus> {
        self.0.corpus.as_ref()
    }

    /// Scores a batch exactly as the HTTP endpoint does.
    pub fn score_batch(&self, req: &RewardsRequest) -> Result<Vec<RewardItemResult>, ApiError> {
        let config = match &req.config {
            Some(o) => self.engine().config().with_overrides(o),
            None => self.engine().config().clone(),
        };
        config
            .validate()
            .map_err(|e| ApiError::bad_request("invalid_config", e.to_string(), Some("config".into())))?;
        let engine = self.engine();
        Ok(engine
            .executor()
            .install(|| req.items.par_iter().map(|item| self.score_item(item, &config)).collect()))
    }

    fn score_item(&self, item: &RewardItem, config: &RewardConfig) -> RewardItemResult {
        let task = match self.corpus().and_then(|c| c.get(&item.task_id)) {
            Some(t) => t,
            None => {
                return RewardItemResult::Error {
                    error: ItemError {
                        kind: "unknown_task".into(),
                        message: format!("unknown task_id `{}`", item.task_id),
                        retryable: false,
                    },
                }
            }
        };
        match self
            .engine()
            .compute_reward_with(&item.response_text, task, config, item.lengths)
        {
            Ok(s) => RewardItemResult::Scored(s),
            Err(e) => RewardItemResult::Error {
                error: reward_error(&e),
            },
        }
    }
}

fn reward_error(e: &RewardError) -> ItemError {
    let kind = match e {
        RewardError::Infrastructure(_) => "infrastructure",
        RewardError::GoldFailed { .. } => "gold_failed",
        RewardError::InvalidLengths(_) => "invalid_lengths",
        RewardError::InvalidConfig(_) => "invalid_config",
    };
    ItemError {
        kind: kind.into(),
        message: e.to_string(),
        retryable: e.is_retryable(),
    }
}

/// Whole-request failure.
#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub body: ErrorBody,
}

impl ApiError {
    fn new(status: StatusCode, kind: &str, message: String, path: Option<String>) -> Self {
        ApiError {
            status,
            body: ErrorBody {
                error: ItemError {
                    kind: kind.into(),
                    message,
                    retryable: status.is_server_error(),
                },
                path,
            },
        }
    }

    fn bad_request(kind: &str, message: String, path: Option<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, kind, message, path)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

/// JSON body whose decoding errors carry the field path.
pub struct JsonBody<T>(pub T);

impl<S, T> FromRequest<S> for JsonBody<T>
where
    S: Send + Sync,
    T: DeserializeOwned,
{
    type Rejection = ApiError;

    async fn from_request(req: Request, state: &S) -> Result<Self, Self::Rejection> {
        let bytes = Bytes::from_request(req, state)
            .await
            .map_err(|e| ApiError::bad_request("invalid_body", e.body_text(), None))?;
        let mut de = serde_json::Deserializer::from_slice(&bytes);
        let value: T = serde_path_to_error::deserialize(&mut de).map_err(|e| {
            let path = e.path().to_string();
            ApiError::bad_request("invalid_body", e.into_inner().to_string(), Some(path))
        })?;
        de.end()
            .map_err(|e| ApiError::bad_request("invalid_body", e.to_string(), None))?;
        Ok(JsonBody(value))
    }
}

async fn blocking<R: Send + 'static>(f: impl FnOnce() -> R + Send + 'static) -> Result<R, ApiError> {
    tokio::task::spawn_blocking(f).await.map_err(|e| {
        ApiError::new(
            StatusCode::INTERNAL_SERVER_ERROR,
            "internal",
            e.to_string(),
            None,
        )
    })
}

async fn rewards(
    State(state): State<AppState>,
    JsonBody(req): JsonBody<RewardsRequest>,
) -> Result<Json<RewardsResponse>, ApiError> {
    let start = Instant::now();
    let items = blocking(move || state.score_batch(&req)).await??;
    Ok(Json(RewardsResponse {
        items,
        latency_ms: start.elapsed().as_secs_f64() * 1000.0,
    }))
}

async fn advantages(
    State(state): State<AppState>,
    JsonBody(req): JsonBody<AdvantagesRequest>,
) -> Result<Json<AdvantagesResponse>, ApiError> {
    let config = GrpoConfig {
        epsilon: req.epsilon.unwrap_or(state.0.grpo.epsilon),
        beta: req.beta.unwrap_or(state.0.grpo.beta),
        ..state.0.grpo
    };
    config
        .validate()
        .map_err(|e| ApiError::bad_request("invalid_config", e.to_string(), None))?;
    let groups = req
        .groups
        .iter()
        .map(|g| match group_advantages(&g.rewards) {
            Ok(advantages) => AdvantageResult::Ok { advantages },
            Err(e) => AdvantageResult::Error {
                error: ItemError {
                    kind: "invalid_group".into(),
                    message: e.to_string(),
                    retryable: false,
                },
            },
        })
        .collect();
    Ok(Json(AdvantagesResponse { groups }))
}

async fn select(
    State(state): State<AppState>,
    JsonBody(req): JsonBody<SelectRequest>,
) -> Result<Json<SelectionResult>, ApiError> {
    let task = state
        .corpus()
        .and_then(|c| c.get(&req.task_id))
        .cloned()
        .ok_or_else(|| {
            ApiError::new(
                StatusCode::NOT_FOUND,
                "unknown_task",
                format!("unknown task_id `{}`", req.task_id),
                Some("task_id".into()),
            )
        })?;
    let result = blocking(move || {
        let engine = state.engine();
        let c = engine.config();
        select_responses(
            engine.executor(),
            &task.db_ref,
            &req.candidates,
            c.execution_limit,
            c.length_measure,
            &c.compare,
        )
    })
    .await?;
    match result {
        Ok(r) => Ok(Json(r)),
        Err(SelectError::Empty) => Err(ApiError::new(
            StatusCode::UNPROCESSABLE_ENTITY,
            "empty_candidates",
            "candidates must not be empty".into(),
            Some("candidates".into()),
        )),
        Err(SelectError::Exec(e)) => Err(ApiError::new(
            StatusCode::SERVICE_UNAVAILABLE,
            "infrastructure",
            e.to_string(),
            None,
        )),
    }
}

#[derive(Debug, Serialize, serde::Deserialize, PartialEq)]
pub struct Health {
    pub status: String,
    pub corpus_size: usize,
    pub db_pool_stats: PoolStats,
}

async fn health(State(state): State<AppState>) -> Json<Health> {
    let corpus_size = state.corpus().map_or(0, Corpus::len);
    let healthy = corpus_size > 0 && state.engine().executor().root().is_dir();
    Json(Health {
        status: if healthy { "ok" } else { "degraded" }.into(),
        corpus_size,
        db_pool_stats: state.engine().executor().stats(),
    })
}

async fn log_requests(req: Request, next: Next) -> Response {
    let method = req.method().clone();
    let path = req.uri().path().to_owned();
    let start = Instant::now();
    let resp = next.run(req).await;
    tracing::info!(
        method = %method,
        path = %path,
        status = resp.status().as_u16(),
        latency_ms = start.elapsed().as_secs_f64() * 1000.0,
        "request"
    );
    resp
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/v1/rewards", post(rewards))
        .route("/v1/advantages", post(advantages))
        .route("/v1/select", post(select))
        .route("/health", get(health))
        .layer(middleware::from_fn(log_requests))
        .with_state(state)
}

/// Serves until Ctrl-C.
pub async fn serve(addr: SocketAddr, state: AppState) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
