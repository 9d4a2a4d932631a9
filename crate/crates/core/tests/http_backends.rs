mod common;

use common::{chat_reply, MockServer};
use narrlens::embedding::{Embedder, EmbedderBackend, EmbedderConfig, EmbedError, RemoteEmbedder};
use narrlens::http::HttpError;
use narrlens::llm::{ChatBackend, ChatBackendConfig, ChatMessage, HttpChatBackend, LlmError};

fn chat_config(url: &str, retries: u32) -> ChatBackendConfig {
    ChatBackendConfig {
        endpoint: Some(url.to_string()),
        model_name: Some("test-model".into()),
        retries,
        backoff_ms: 1,
        timeout_secs: 5,
        ..ChatBackendConfig::default()
    }
}

#[test]
fn chat_retries_transient_status_then_succeeds() {
    let server = MockServer::start(vec![
        (503, "{}".into()),
        (429, "{}".into()),
        (200, chat_reply("Thought.\nLABELS: A")),
    ]);
    let backend = HttpChatBackend::new(&chat_config(&server.url, 3)).unwrap();
    let reply = backend
        .complete(&[ChatMessage::system("sys"), ChatMessage::user("hello")])
        .unwrap();
    assert_eq!(reply, "Thought.\nLABELS: A");
    let reqs = server.join();
    assert_eq!(reqs.len(), 3);
    let body: serde_json::Value = serde_json::from_str(&reqs[2].body).unwrap();
    assert_eq!(body["model"], "test-model");
    assert_eq!(body["temperature"], 0.0);
    assert_eq!(body["max_tokens"], 1024);
    assert_eq!(body["messages"][0]["role"], "system");
    assert_eq!(body["messages"][1]["content"], "hello");
    assert_eq!(reqs[0].header("content-type"), Some("application/json"));
}

#[test]
fn chat_gives_up_after_retry_budget() {
    let server = MockServer::start(vec![(500, "{}".into()), (502, "{}".into())]);
    let backend = HttpChatBackend::new(&chat_config(&server.url, 1)).unwrap();
    let err = backend.complete(&[ChatMessage::user("x")]).unwrap_err();
    match err {
        LlmError::Http(HttpError::Exhausted { attempts, .. }) => assert_eq!(attempts, 2),
        other => panic!("unexpected {other:?}"),
    }
    assert_eq!(server.join().len(), 2);
}

#[test]
fn chat_client_errors_are_not_retried() {
    let server = MockServer::start(vec![(400, "{}".into())]);
    let backend = HttpChatBackend::new(&chat_config(&server.url, 3)).unwrap();
    let err = backend.complete(&[ChatMessage::user("x")]).unwrap_err();
    assert!(matches!(err, LlmError::Http(HttpError::Rejected { status: 400, .. })), "{err:?}");
    assert_eq!(server.join().len(), 1);
}

#[test]
fn chat_malformed_body_is_a_decode_error() {
    let server = MockServer::start(vec![(200, "not json".into())]);
    let backend = HttpChatBackend::new(&chat_config(&server.url, 0)).unwrap();
    let err = backend.complete(&[ChatMessage::user("x")]).unwrap_err();
    assert!(matches!(err, LlmError::Http(HttpError::Decode { .. })), "{err:?}");
    server.join();
}

#[test]
fn chat_config_requires_endpoint_and_model() {
    assert!(HttpChatBackend::new(&ChatBackendConfig::default()).is_err());
    let mut cfg = chat_config("http://127.0.0.1:9", 0);
    cfg.model_name = None;
    assert!(HttpChatBackend::new(&cfg).is_err());
}

fn embed_config(url: &str, dim: usize, max_batch: usize) -> EmbedderConfig {
    EmbedderConfig {
        backend: EmbedderBackend::Remote,
        endpoint: Some(url.to_string()),
        model_name: Some("embed-model".into()),
        dim,
        max_batch,
        max_parallel: 1,
        timeout_secs: 5,
        retries: 0,
        backoff_ms: 1,
    }
}

#[test]
fn remote_embedder_reorders_by_index_and_batches() {
    let first = serde_json::json!({ "data": [
        { "index": 1, "embedding": [0.0, 2.0] },
        { "index": 0, "embedding": [3.0, 0.0] },
    ]});
    let second = serde_json::json!({ "data": [{ "index": 0, "embedding": [1.0, 1.0] }]});
    let server = MockServer::start(vec![(200, first.to_string()), (200, second.to_string())]);
    let embedder = RemoteEmbedder::new(&embed_config(&server.url, 2, 2)).unwrap();
    let texts: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
    let out = embedder.embed(&texts).unwrap();
    assert_eq!(out.len(), 3);
    assert_eq!(out[0].values(), &[1.0, 0.0]);
    assert_eq!(out[1].values(), &[0.0, 1.0]);
    let h = std::f64::consts::FRAC_1_SQRT_2;
    assert!((out[2].values()[0] - h).abs() < 1e-12);
    let reqs = server.join();
    assert_eq!(reqs.len(), 2);
    let body: serde_json::Value = serde_json::from_str(&reqs[0].body).unwrap();
    assert_eq!(body["model"], "embed-model");
    assert_eq!(body["input"], serde_json::json!(["a", "b"]));
}

#[test]
fn remote_embedder_rejects_wrong_dimension() {
    let body = serde_json::json!({ "data": [{ "index": 0, "embedding": [1.0, 0.0, 0.0] }]});
    let server = MockServer::start(vec![(200, body.to_string())]);
    let embedder = RemoteEmbedder::new(&embed_config(&server.url, 2, 8)).unwrap();
    let err = embedder.embed(&["x".to_string()]).unwrap_err();
    assert!(matches!(err, EmbedError::DimensionMismatch { expected: 2, actual: 3 }), "{err:?}");
    server.join();
}

#[test]
fn remote_embedder_rejects_short_response() {
    let body = serde_json::json!({ "data": [{ "index": 0, "embedding": [1.0, 0.0] }]});
    let server = MockServer::start(vec![(200, body.to_string())]);
    let embedder = RemoteEmbedder::new(&embed_config(&server.url, 2, 8)).unwrap();
    let err = embedder.embed(&["x".to_string(), "y".to_string()]).unwrap_err();
    assert!(matches!(err, EmbedError::CountMismatch { .. }), "{err:?}");
    server.join();
}
