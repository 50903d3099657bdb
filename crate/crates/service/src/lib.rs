//! Batch scoring over local HTTP, so a training loop in any language can
//! use the composite reward without reimplementing it.
//!
//! The protocol is stateless: every response carries a fingerprint of the
//! reward config that produced it, and a request may carry a partial config
//! override that applies to that request alone. Scoring through the service
//! is bit-identical to calling the library in process.

use std::borrow::Cow;
use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use cot_forge_core::reward::{RewardConfigError, RewardError};
use cot_forge_core::{
    analyze_response, classify_stratum, LabelId, LabelSpaceSet, MarkerLexicon, RewardConfig,
    RewardConfigOverride, RewardVector, StratumKey, TaskKind, DEFAULT_LENGTH_THRESHOLD,
};
use serde::{Deserialize, Serialize};

pub const ERROR_EMPTY_INPUT: &str = "EMPTY_INPUT";
pub const ERROR_INVALID_GOLD_LABEL: &str = "INVALID_GOLD_LABEL";

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreItem {
    pub task: TaskKind,
    pub gold_label: LabelId,
    pub text: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreRequest {
    pub items: Vec<ScoreItem>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_override: Option<RewardConfigOverride>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ItemError {
    pub code: String,
    pub message: String,
}

/// One response item. Serialized untagged: scored items carry rewards,
/// failed items carry an error object, both carry the request index.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScoredItem {
    Scored {
        index: usize,
        rewards: RewardVector,
        predicted_label: Option<LabelId>,
        stratum: StratumKey,
        token_length: u64,
    },
    Failed {
        index: usize,
        error: ItemError,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScoreResponse {
    pub items: Vec<ScoredItem>,
    pub config_fingerprint: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConfigResponse {
    pub config: RewardConfig,
    pub config_fingerprint: String,
}

struct ServiceState {
    config: RewardConfig,
    lexicon: MarkerLexicon,
    spaces: LabelSpaceSet,
    fingerprint: String,
}

/// The service router, for embedding or for tests that bind their own port.
pub fn app(config: RewardConfig, lexicon: MarkerLexicon) -> Router {
    let fingerprint = config.fingerprint();
    let state = Arc::new(ServiceState {
        config,
        lexicon,
        spaces: LabelSpaceSet::default(),
        fingerprint,
    });
    Router::new()
        .route("/v1/score", post(score))
        .route("/v1/config", get(config_info))
        .route("/healthz", get(healthz))
        .with_state(state)
}

#[derive(Debug, thiserror::Error)]
pub enum ServeError {
    #[error(transparent)]
    Config(#[from] RewardConfigError),
    #[error("failed to bind {addr}")]
    Bind { addr: String, source: std::io::Error },
    #[error("server failed")]
    Serve(#[source] std::io::Error),
}

/// Bind and serve until the process is stopped.
pub async fn serve(
    bind: &str,
    config: RewardConfig,
    lexicon: MarkerLexicon,
) -> Result<(), ServeError> {
    config.validate()?;
    let listener = tokio::net::TcpListener::bind(bind)
        .await
        .map_err(|source| ServeError::Bind { addr: bind.to_string(), source })?;
    let addr = listener.local_addr().map_err(ServeError::Serve)?;
    tracing::info!(%addr, "scoring service listening");
    axum::serve(listener, app(config, lexicon)).await.map_err(ServeError::Serve)
}

async fn healthz() -> &'static str {
    "ok"
}

async fn config_info(State(state): State<Arc<ServiceState>>) -> Json<ConfigResponse> {
    Json(ConfigResponse {
        config: state.config.clone(),
        config_fingerprint: state.fingerprint.clone(),
    })
}

fn bad_request(message: impl Into<String>) -> Response {
    (StatusCode::BAD_REQUEST, Json(serde_json::json!({ "error": message.into() })))
        .into_response()
}

async fn score(
    State(state): State<Arc<ServiceState>>,
    payload: Result<Json<ScoreRequest>, JsonRejection>,
) -> Response {
    let Json(request) = match payload {
        Ok(json) => json,
        Err(rejection) => return bad_request(rejection.body_text()),
    };
    if request.items.is_empty() {
        return bad_request("items must be non-empty");
    }

    let (config, fingerprint): (Cow<RewardConfig>, String) = match &request.config_override {
        Some(o) if !o.is_empty() => match o.apply(&state.config) {
            Ok(config) => {
                let fingerprint = config.fingerprint();
                (Cow::Owned(config), fingerprint)
            }
            Err(e) => return bad_request(format!("config_override: {e}")),
        },
        _ => (Cow::Borrowed(&state.config), state.fingerprint.clone()),
    };

    let items = request
        .items
        .iter()
        .enumerate()
        .map(|(index, item)| score_item(&state, &config, index, item))
        .collect();
    Json(ScoreResponse { items, config_fingerprint: fingerprint }).into_response()
}

fn score_item(
    state: &ServiceState,
    config: &RewardConfig,
    index: usize,
    item: &ScoreItem,
) -> ScoredItem {
    let space = state.spaces.get(item.task);
    match analyze_response(&item.text, item.gold_label, space, config, &state.lexicon) {
        Ok(analysis) => ScoredItem::Scored {
            index,
            rewards: analysis.rewards,
            predicted_label: analysis.predicted_label,
            stratum: classify_stratum(&analysis.chain, DEFAULT_LENGTH_THRESHOLD),
            token_length: analysis.chain.token_length as u64,
        },
        Err(RewardError::Parse(e)) => ScoredItem::Failed {
            index,
            error: ItemError { code: ERROR_EMPTY_INPUT.to_string(), message: e.to_string() },
        },
        Err(e @ RewardError::GoldLabelOutOfSpace { .. }) => ScoredItem::Failed {
            index,
            error: ItemError {
                code: ERROR_INVALID_GOLD_LABEL.to_string(),
                message: e.to_string(),
            },
        },
    }
}
