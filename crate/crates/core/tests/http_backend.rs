use std::net::SocketAddr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::extract::State;
use axum::http::{HeaderMap, StatusCode};
use axum::routing::post;
use axum::{Json, Router};
use interlace_core::lm::{query_lm, DecodingParams, FinishReason, HttpBackend, LmError, Prompt, RetryPolicy};
use serde_json::{json, Value};

#[derive(Default)]
struct Seen {
    bodies: Mutex<Vec<Value>>,
    auth: Mutex<Vec<Option<String>>>,
    limited_hits: AtomicUsize,
}

async fn ok(State(seen): State<Arc<Seen>>, headers: HeaderMap, Json(body): Json<Value>) -> Json<Value> {
    let auth = headers.get("authorization").map(|v| v.to_str().unwrap().to_string());
    seen.auth.lock().unwrap().push(auth);
    seen.bodies.lock().unwrap().push(body);
    Json(json!({
        "choices": [
            {"text": "first answer", "finish_reason": "length"},
            {"text": "second***tail", "finish_reason": "stop"},
            {"text": "third"}
        ]
    }))
}

async fn limited(State(seen): State<Arc<Seen>>) -> StatusCode {
    seen.limited_hits.fetch_add(1, Ordering::SeqCst);
    StatusCode::TOO_MANY_REQUESTS
}

async fn broken() -> (StatusCode, &'static str) {
    (StatusCode::INTERNAL_SERVER_ERROR, "model crashed")
}

async fn slow() -> Json<Value> {
    tokio::time::sleep(Duration::from_secs(3)).await;
    Json(json!({"choices": []}))
}

async fn garbage() -> &'static str {
    "not json"
}

fn serve() -> (SocketAddr, Arc<Seen>) {
    let seen = Arc::new(Seen::default());
    let app = Router::new()
        .route("/ok", post(ok))
        .route("/limited", post(limited))
        .route("/broken", post(broken))
        .route("/slow", post(slow))
        .route("/garbage", post(garbage))
        .with_state(seen.clone());
    let (tx, rx) = std::sync::mpsc::channel();
    std::thread::spawn(move || {
        let rt = tokio::runtime::Runtime::new().unwrap();
        rt.block_on(async move {
            let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
            tx.send(listener.local_addr().unwrap()).unwrap();
            axum::serve(listener, app).await.unwrap();
        });
    });
    (rx.recv().unwrap(), seen)
}

fn backend(addr: SocketAddr, path: &str, key: Option<&str>) -> HttpBackend {
    HttpBackend::new("remote-a", format!("http://{addr}{path}"), key.map(String::from), Duration::from_millis(500))
        .unwrap()
}

fn params() -> DecodingParams {
    DecodingParams {
        temperature: 0.9,
        top_k: Some(50),
        max_tokens: 64,
        stop_sequences: vec!["***".into()],
        num_completions: 2,
    }
}

fn no_wait() -> RetryPolicy {
    RetryPolicy { max_attempts: 3, base_delay: Duration::from_millis(1) }
}

#[test]
fn request_body_auth_and_reply_shape() {
    let (addr, seen) = serve();
    let b = backend(addr, "/ok", Some("sk-test")).with_remote_model("upstream-7b");
    let set = query_lm(&Prompt::new("Hello", "req-1"), &params(), &b, &no_wait()).unwrap();
    assert_eq!(set.completions.len(), 2);
    assert_eq!(set.completions[0].text, "first answer");
    assert_eq!(set.completions[0].finish_reason, FinishReason::Length);
    assert_eq!(set.completions[1].text, "second");
    assert_eq!(set.completions[1].finish_reason, FinishReason::StopSequence);

    let bodies = seen.bodies.lock().unwrap();
    assert_eq!(
        bodies[0],
        json!({
            "model": "upstream-7b",
            "prompt": "Hello",
            "temperature": 0.9,
            "top_k": 50,
            "max_tokens": 64,
            "stop": ["***"],
            "n": 2
        })
    );
    assert_eq!(seen.auth.lock().unwrap()[0].as_deref(), Some("Bearer sk-test"));
}

#[test]
fn optional_fields_are_omitted() {
    let (addr, seen) = serve();
    let b = backend(addr, "/ok", None);
    let p = DecodingParams { top_k: None, stop_sequences: vec![], num_completions: 1, ..params() };
    query_lm(&Prompt::new("x", "req-1"), &p, &b, &no_wait()).unwrap();
    let body = seen.bodies.lock().unwrap()[0].clone();
    assert!(body.get("top_k").is_none());
    assert!(body.get("stop").is_none());
    assert_eq!(body["model"], "remote-a");
    assert_eq!(seen.auth.lock().unwrap()[0], None);
}

#[test]
fn rate_limit_is_retried_then_reported() {
    let (addr, seen) = serve();
    let b = backend(addr, "/limited", None);
    let err = query_lm(&Prompt::new("x", "req-1"), &params(), &b, &no_wait()).unwrap_err();
    assert!(matches!(err, LmError::RateLimited(_)), "{err}");
    assert_eq!(seen.limited_hits.load(Ordering::SeqCst), 3);
}

#[test]
fn server_error_is_backend_failure() {
    let (addr, _) = serve();
    let err = query_lm(&Prompt::new("x", "req-1"), &params(), &backend(addr, "/broken", None), &no_wait()).unwrap_err();
    match err {
        LmError::BackendFailure(msg) => assert!(msg.contains("500") && msg.contains("model crashed"), "{msg}"),
        other => panic!("unexpected {other}"),
    }
    let err = query_lm(&Prompt::new("x", "req-1"), &params(), &backend(addr, "/garbage", None), &no_wait()).unwrap_err();
    assert!(matches!(err, LmError::BackendFailure(_)));
}

#[test]
fn timeout_is_backend_failure() {
    let (addr, _) = serve();
    let err = query_lm(&Prompt::new("x", "req-1"), &params(), &backend(addr, "/slow", None), &no_wait()).unwrap_err();
    match err {
        LmError::BackendFailure(msg) => assert!(msg.contains("timed out"), "{msg}"),
        other => panic!("unexpected {other}"),
    }
}
