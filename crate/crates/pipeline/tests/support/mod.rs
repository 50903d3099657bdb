//! Script-driven endpoint stub. Each prompt maps to a sequence of replies
//! consumed in arrival order; once a sequence runs out its last reply
//! repeats. Unscripted prompts get a 404 so template bugs surface loudly.
//! Binding is 127.0.0.1:0, so no test needs network egress.

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::sync::{Arc, Mutex};

use axum::extract::State;
use axum::http::StatusCode;
use axum::routing::post;
use axum::{Json, Router};
use cot_forge_client::{ChatClient, EndpointConfig};

#[derive(Clone)]
pub enum Reply {
    Text(String),
    Status(u16),
}

pub fn text(s: &str) -> Reply {
    Reply::Text(s.to_string())
}

pub struct Script {
    rules: BTreeMap<String, Vec<Reply>>,
    hits: Mutex<BTreeMap<String, usize>>,
}

impl Script {
    pub fn new(rules: impl IntoIterator<Item = (String, Vec<Reply>)>) -> Arc<Self> {
        Arc::new(Self { rules: rules.into_iter().collect(), hits: Mutex::new(BTreeMap::new()) })
    }

    pub fn empty() -> Arc<Self> {
        Self::new(Vec::new())
    }

    #[allow(dead_code)]
    pub fn hits_for(&self, prompt: &str) -> usize {
        self.hits.lock().unwrap().get(prompt).copied().unwrap_or(0)
    }
}

async fn handler(
    State(script): State<Arc<Script>>,
    Json(body): Json<serde_json::Value>,
) -> (StatusCode, Json<serde_json::Value>) {
    let prompt = body["messages"][0]["content"].as_str().unwrap_or_default().to_string();
    let k = {
        let mut hits = script.hits.lock().unwrap();
        let slot = hits.entry(prompt.clone()).or_insert(0);
        let k = *slot;
        *slot += 1;
        k
    };
    let reply = match script.rules.get(&prompt) {
        Some(steps) => steps[k.min(steps.len() - 1)].clone(),
        None => Reply::Status(404),
    };
    match reply {
        Reply::Text(content) => (
            StatusCode::OK,
            Json(serde_json::json!({"choices": [{"message": {"content": content}}]})),
        ),
        Reply::Status(code) => (
            StatusCode::from_u16(code).unwrap(),
            Json(serde_json::json!({"error": "scripted failure"})),
        ),
    }
}

pub async fn spawn(script: Arc<Script>) -> SocketAddr {
    let app = Router::new().route("/chat/completions", post(handler)).with_state(script);
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move { axum::serve(listener, app).await.unwrap() });
    addr
}

pub fn client_for(addr: SocketAddr) -> ChatClient {
    let mut config = EndpointConfig::new(format!("http://{addr}"), "stub-model");
    config.max_concurrency = 1;
    config.max_retries = 0;
    config.timeout_secs = 5;
    ChatClient::new(config).unwrap()
}
