use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use axum::extract::State;
use axum::http::{HeaderMap, StatusCode};
use axum::routing::post;
use axum::{Json, Router};
use serde_json::{json, Value};

use iul_core::llm::{
    query_endpoint, render_prompt, run_llm_eval, ChatClient, LlmError, LlmEvalConfig, LlmItem, PromptMode, PromptSpec,
    VerdictCache,
};
use iul_core::modeling::{hierarchical_predict, LinearModel, ModelKind, ScoreError, Scorer, GENERAL_HEAD};
use iul_core::modeling::{subcategory_heads, CountingScorer, Featurizer};
use iul_service::{BackgroundServer, ChatEndpointConfig, HttpScorer, OpenAiChatClient, ScoreRequest, ScorerConfig};

#[derive(Clone, Default)]
struct Stub {
    hits: Arc<AtomicUsize>,
    fail_first: usize,
    last_body: Arc<std::sync::Mutex<Option<Value>>>,
    last_auth: Arc<std::sync::Mutex<Option<String>>>,
}

async fn score_echo(State(s): State<Stub>, headers: HeaderMap, Json(req): Json<ScoreRequest>) -> (StatusCode, Json<Value>) {
    let n = s.hits.fetch_add(1, Ordering::SeqCst);
    *s.last_auth.lock().unwrap() = headers.get("authorization").map(|v| v.to_str().unwrap().to_string());
    if n < s.fail_first {
        return (StatusCode::SERVICE_UNAVAILABLE, Json(json!({"error": "busy"})));
    }
    let scores: Vec<Vec<f64>> = req.texts.iter().map(|_| vec![0.9]).collect();
    (StatusCode::OK, Json(json!({ "scores": scores })))
}

async fn chat(State(s): State<Stub>, Json(body): Json<Value>) -> (StatusCode, Json<Value>) {
    let n = s.hits.fetch_add(1, Ordering::SeqCst);
    *s.last_body.lock().unwrap() = Some(body);
    if n < s.fail_first {
        return (StatusCode::BAD_GATEWAY, Json(json!({"error": "upstream"})));
    }
    (StatusCode::OK, Json(json!({"choices": [{"message": {"role": "assistant", "content": "Reasoning: binary framing.\nFinal Answer: 1"}}]})))
}

fn score_server(stub: Stub) -> BackgroundServer {
    BackgroundServer::start(Router::new().route("/v1/score", post(score_echo)).with_state(stub)).unwrap()
}

fn chat_server(stub: Stub) -> BackgroundServer {
    BackgroundServer::start(Router::new().route("/v1/chat/completions", post(chat)).with_state(stub)).unwrap()
}

fn scorer(url: String, retries: u32) -> HttpScorer {
    let mut cfg = ScorerConfig::new(url, vec![GENERAL_HEAD.to_string()]);
    cfg.retries = retries;
    cfg.batch_size = 2;
    cfg.token = Some("s3cret".into());
    HttpScorer::new(cfg).unwrap()
}

#[test]
fn echo_backend_scores_point_nine() {
    let stub = Stub::default();
    let server = score_server(stub.clone());
    let out = scorer(server.url(), 0).score(&["a", "b", "c"]).unwrap();
    assert_eq!(out.len(), 3);
    assert!(out.iter().all(|s| s.get(GENERAL_HEAD) == Some(0.9)));
    assert_eq!(stub.hits.load(Ordering::SeqCst), 2);
    assert_eq!(stub.last_auth.lock().unwrap().as_deref(), Some("Bearer s3cret"));
}

#[test]
fn scorer_retries_server_errors() {
    let stub = Stub { fail_first: 2, ..Stub::default() };
    let server = score_server(stub.clone());
    assert!(scorer(server.url(), 3).score(&["a"]).is_ok());
    let stub = Stub { fail_first: 2, ..Stub::default() };
    let server = score_server(stub);
    assert!(matches!(scorer(server.url(), 1).score(&["a"]), Err(ScoreError::Transport(_))));
}

#[test]
fn unreachable_scorer_is_retryable_transport_error() {
    let err = scorer("http://127.0.0.1:9".into(), 0).score(&["a"]).unwrap_err();
    assert!(err.is_retryable());
}

#[test]
fn remote_gate_feeds_hierarchy() {
    let server = score_server(Stub::default());
    let general = scorer(server.url(), 0);
    let level2 = CountingScorer::new(LinearModel::zeros(ModelKind::Subcategories, Featurizer::default(), subcategory_heads()).unwrap());
    let out = hierarchical_predict(&general, &level2, &["x y z w", "a b c d"]).unwrap();
    assert!(out.iter().all(|p| p.y));
    assert_eq!(level2.texts_scored(), 2);
}

#[test]
fn chat_client_sends_system_and_user_at_temperature_zero() {
    let stub = Stub::default();
    let server = chat_server(stub.clone());
    let client = OpenAiChatClient::new(ChatEndpointConfig::new(format!("{}/v1", server.url()), "stub-model"));
    let prompt = render_prompt(&PromptSpec::standard(PromptMode::Both, "both males and females")).unwrap();
    let raw = query_endpoint(&client, &prompt, 0, Duration::ZERO).unwrap();
    assert!(raw.ends_with("Final Answer: 1"));
    let body = stub.last_body.lock().unwrap().clone().unwrap();
    assert_eq!(body["temperature"], 0);
    assert_eq!(body["model"], "stub-model");
    assert_eq!(body["messages"][0]["role"], "system");
    assert_eq!(body["messages"][0]["content"], prompt.system);
    assert_eq!(body["messages"][1]["content"], prompt.user);
}

#[test]
fn chat_retries_then_succeeds() {
    let stub = Stub { fail_first: 2, ..Stub::default() };
    let server = chat_server(stub.clone());
    let client = OpenAiChatClient::new(ChatEndpointConfig::new(format!("{}/v1", server.url()), "m"));
    let prompt = render_prompt(&PromptSpec::standard(PromptMode::Definitions, "the elderly")).unwrap();
    assert!(query_endpoint(&client, &prompt, 3, Duration::ZERO).is_ok());
    assert_eq!(stub.hits.load(Ordering::SeqCst), 3);
}

#[test]
fn chat_timeout_without_retry_is_transport_error() {
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    // Accepts but never answers.
    let _hold = std::thread::spawn(move || {
        let conns: Vec<_> = listener.incoming().take(1).collect();
        std::thread::sleep(Duration::from_secs(3));
        drop(conns);
    });
    let mut cfg = ChatEndpointConfig::new(format!("http://{addr}/v1"), "m");
    cfg.timeout = Duration::from_millis(300);
    let client = OpenAiChatClient::new(cfg);
    let prompt = render_prompt(&PromptSpec::standard(PromptMode::Both, "text here")).unwrap();
    assert!(matches!(query_endpoint(&client, &prompt, 0, Duration::ZERO), Err(LlmError::Transport { attempts: 1, .. })));
}

#[test]
fn llm_eval_over_http_with_cache() {
    let stub = Stub::default();
    let server = chat_server(stub.clone());
    let client = OpenAiChatClient::new(ChatEndpointConfig::new(format!("{}/v1", server.url()), "m"));
    assert_eq!(client.model(), "m");
    let items: Vec<LlmItem> = (0..20)
        .map(|i| LlmItem { excerpt_id: format!("e{i}"), text: format!("text {i} here"), y: i < 4, fold: i % 2 })
        .collect();
    let dir = tempfile::tempdir().unwrap();
    let cache = VerdictCache::open(dir.path().join("cache.jsonl")).unwrap();
    let cfg = LlmEvalConfig { retry_backoff: Duration::ZERO, ..LlmEvalConfig::default() };
    let first = run_llm_eval(&items, &client, &cache, &cfg).unwrap();
    assert_eq!(first.report.mean.recall, 1.0);
    assert_eq!(stub.hits.load(Ordering::SeqCst), 20);
    let reopened = VerdictCache::open(dir.path().join("cache.jsonl")).unwrap();
    let second = run_llm_eval(&items, &client, &reopened, &cfg).unwrap();
    assert_eq!(second.network_calls, 0);
    assert_eq!(stub.hits.load(Ordering::SeqCst), 20);
    assert_eq!(first.verdicts, second.verdicts);
}
