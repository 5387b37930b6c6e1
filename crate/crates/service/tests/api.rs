use std::sync::Arc;

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use interlace_core::replay::replay_verify;
use interlace_core::store::{load_trace, TraceStore};
use interlace_core::tasks::crossword::TIME_LIMIT_MS;
use interlace_core::trace::{ActionKind, EndReason, Payload};
use interlace_core::{InteractionTrace, TaskKind};
use interlace_service::server::{router, AppState, ManualClock};
use interlace_service::Environment;
use serde_json::{json, Value};
use tower::ServiceExt;

const START: u64 = 1_700_000_000_000;

struct Harness {
    app: Arc<AppState>,
    clock: Arc<ManualClock>,
    router: Router,
    dir: tempfile::TempDir,
}

impl Harness {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let clock = Arc::new(ManualClock::new(START));
        let env = Arc::new(Environment::bundled());
        let app = AppState::new(env, TraceStore::new(dir.path()), clock.clone());
        Self { router: router(app.clone()), app, clock, dir }
    }

    async fn call(&self, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
        let req = Request::builder().method(method).uri(uri).header("content-type", "application/json");
        let req = match body {
            Some(b) => req.body(Body::from(b.to_string())).unwrap(),
            None => req.body(Body::empty()).unwrap(),
        };
        let resp = self.router.clone().oneshot(req).await.unwrap();
        let status = resp.status();
        let bytes = resp.into_body().collect().await.unwrap().to_bytes();
        let value = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap() };
        (status, value)
    }

    async fn create(&self, task: &str, seed: u64) -> Value {
        let (status, v) =
            self.call(Method::POST, "/sessions", Some(json!({"task": task, "model_id": "mock-alpha", "seed": seed}))).await;
        assert_eq!(status, StatusCode::CREATED, "{v}");
        v
    }

    async fn act(&self, id: &str, kind: ActionKind, field: Option<&str>, payload: Option<Payload>) -> (StatusCode, Value) {
        self.clock.advance(1_000);
        let body = json!({"kind": kind, "target_field": field, "payload": payload});
        self.call(Method::POST, &format!("/sessions/{id}/actions"), Some(body)).await
    }
}

fn text(s: &str) -> Option<Payload> {
    Some(Payload::Text(s.into()))
}

fn crossword_survey() -> Value {
    json!({
        "form": "crossword.session",
        "respondent": {"kind": "first_person"},
        "responses": [
            {"item_id": "fluency", "answer": {"likert": 4}},
            {"item_id": "helpfulness", "answer": {"likert": 3}},
            {"item_id": "helpfulness_reason", "answer": {"text": "ok"}},
            {"item_id": "ease", "answer": {"likert": 5}},
            {"item_id": "enjoyment", "answer": {"likert": 2}},
            {"item_id": "change", "answer": {"text": "ok"}},
            {"item_id": "description", "answer": {"text": "ok"}}
        ]
    })
}

#[tokio::test]
async fn health_and_create() {
    let h = Harness::new();
    let (status, v) = h.call(Method::GET, "/health", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["status"], "ok");

    let v = h.create("dialogue", 7).await;
    assert_eq!(v["session_id"], "dialogue-000001");
    assert_eq!(v["task"], "dialogue");
    assert_eq!(v["model_id"], "mock-alpha");
    assert_eq!(v["ended"], false);
    assert_eq!(v["finish_allowed"], false);
    assert_eq!(v["state_version"], 1);
    assert!(h.dir.path().join("dialogue").join("dialogue-000001.jsonl").exists());

    let (status, _) =
        h.call(Method::POST, "/sessions", Some(json!({"task": "dialogue", "model_id": "no-such-model"}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, _) = h.call(Method::GET, "/sessions/nope/state", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn hidden_fields_never_leave_the_server() {
    let h = Harness::new();
    let cw = h.create("crossword", 3).await;
    let fields = cw["fields"].as_object().unwrap();
    assert!(fields.contains_key("grid") && fields.contains_key("clues"));
    for hidden in ["solution", "answers", "puzzle_id", "flagged_messages"] {
        assert!(!fields.contains_key(hidden), "{hidden} leaked");
    }
    assert!(!cw.to_string().contains("\"answer\""));

    let qa = h.create("qa", 3).await;
    let fields = qa["fields"].as_object().unwrap();
    assert!(fields.contains_key("question") && fields.contains_key("choices"));
    assert!(!fields.contains_key("quiz") && !fields.contains_key("answers"));
    assert!(!qa.to_string().contains("gold"));
}

#[tokio::test]
async fn actions_versions_and_rejections() {
    let h = Harness::new();
    let id = h.create("dialogue", 11).await["session_id"].as_str().unwrap().to_string();

    let (status, v) = h.act(&id, ActionKind::TypeText, Some("user_input"), text("Hello there")).await;
    assert_eq!(status, StatusCode::OK, "{v}");
    assert_eq!(v["outcome"]["status"], "applied");
    assert_eq!(v["state"]["fields"]["user_input"], "Hello there");
    let version = v["state"]["state_version"].as_u64().unwrap();

    let (status, v) = h.act(&id, ActionKind::ClickButton, Some("send"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["events_appended"], 3);
    assert_eq!(v["state"]["state_version"].as_u64().unwrap(), version + 3);
    let history = v["state"]["fields"]["dialogue_history"].as_array().unwrap();
    assert_eq!(history.len(), 2);

    // A stale client gets 409 and nothing is recorded.
    let stale = json!({"kind": "click_button", "target_field": "send", "expected_version": version});
    let (status, v) = h.call(Method::POST, &format!("/sessions/{id}/actions"), Some(stale)).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(v["state"]["state_version"].as_u64().unwrap(), version + 3);

    let (status, v) = h.act(&id, ActionKind::Finish, None, None).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert!(v["error"].as_str().unwrap().contains("finish"));
    assert_eq!(v["state"]["state_version"].as_u64().unwrap(), version + 4);

    let (status, _) = h.act(&id, ActionKind::ClickButton, Some("launch"), None).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);

    let (status, _) = h.call(Method::GET, &format!("/traces/{id}"), None).await;
    assert_eq!(status, StatusCode::CONFLICT);
}

#[tokio::test]
async fn survey_then_trace() {
    let h = Harness::new();
    let id = h.create("crossword", 5).await["session_id"].as_str().unwrap().to_string();
    let uri = format!("/sessions/{id}/survey");

    let (status, v) = h.call(Method::POST, &uri, Some(crossword_survey())).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY, "{v}");
    assert!(v["state"]["surveys"].as_array().unwrap().is_empty());

    let (status, v) = h.act(&id, ActionKind::Finish, None, None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["state"]["end_reason"], json!(EndReason::Finished));
    assert_eq!(v["state"]["surveys"], json!(["crossword.session"]));

    let (status, v) = h.call(Method::POST, &uri, Some(crossword_survey())).await;
    assert_eq!(status, StatusCode::OK, "{v}");

    let (status, v) = h.call(Method::GET, &format!("/traces/{id}"), None).await;
    assert_eq!(status, StatusCode::OK);
    let served: InteractionTrace = serde_json::from_value(v).unwrap();
    assert_eq!(served.surveys().count(), 1);
    let on_disk = load_trace(&h.dir.path().join("crossword").join(format!("{id}.jsonl"))).unwrap();
    assert!(!on_disk.truncated_tail);
    assert_eq!(on_disk.trace, served);
    assert!(replay_verify(&served, &Environment::bundled().surveys).verified);
}

#[tokio::test]
async fn ticker_ends_timed_sessions() {
    let h = Harness::new();
    let cw = h.create("crossword", 9).await;
    let dl = h.create("dialogue", 9).await;
    assert_eq!(cw["time_limit_ms"], TIME_LIMIT_MS);
    assert_eq!(dl["time_limit_ms"], Value::Null);
    let id = cw["session_id"].as_str().unwrap().to_string();

    let (status, _) = h.act(&id, ActionKind::SelectOption, Some("selected_clue"), Some(Payload::Choice(0))).await;
    assert_eq!(status, StatusCode::OK);
    h.clock.advance(TIME_LIMIT_MS - 2_000);
    assert_eq!(h.app.tick(), 0);
    h.clock.advance(1_000);
    assert_eq!(h.app.tick(), 1);
    assert_eq!(h.app.tick(), 0);

    let (_, v) = h.call(Method::GET, &format!("/sessions/{id}/state"), None).await;
    assert_eq!(v["ended"], true);
    assert_eq!(v["end_reason"], json!(EndReason::TimeLimit));
    assert_eq!(v["elapsed_ms"], TIME_LIMIT_MS);
    let (_, v) = h.call(Method::GET, &format!("/sessions/{}/state", dl["session_id"].as_str().unwrap()), None).await;
    assert_eq!(v["ended"], false);

    let (status, _) = h.act(&id, ActionKind::TypeText, Some("user_input"), text("late")).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);

    let store = TraceStore::new(h.dir.path());
    let trace = load_trace(&store.path_for(TaskKind::Crossword, &interlace_core::SessionId(id))).unwrap().trace;
    assert_eq!(trace.end_reason(), Some(EndReason::TimeLimit));
    assert!(replay_verify(&trace, &Environment::bundled().surveys).verified);
}

#[tokio::test]
async fn ids_skip_existing_files() {
    let h = Harness::new();
    std::fs::create_dir_all(h.dir.path().join("qa")).unwrap();
    std::fs::write(h.dir.path().join("qa").join("qa-000001.jsonl"), "taken").unwrap();
    let v = h.create("qa", 1).await;
    assert_eq!(v["session_id"], "qa-000002");
    assert_eq!(std::fs::read_to_string(h.dir.path().join("qa").join("qa-000001.jsonl")).unwrap(), "taken");
}
