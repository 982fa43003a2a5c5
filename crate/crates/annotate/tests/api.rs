use std::collections::BTreeMap;
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use http_body_util::BodyExt;
use quadfuse_annotate::{router, AppState, Corpus, Store};
use quadfuse_core::Label;
use serde_json::{json, Value};
use tower::ServiceExt;

const CORPUS: &str = r##"{"kind":"post","post_id":"p1","author_id":"a1","image_refs":["p1.jpg"],"caption":"new batch","hashtags":["#LSD","tabs"],"comments":[{"comment_id":"c1","user_id":"d1","text":"wickr me"},{"comment_id":"c2","user_id":"d2","text":"snap for menu"},{"comment_id":"c3","user_id":"u3","text":"price?"}]}
{"kind":"post","post_id":"p2","author_id":"a2","image_refs":["p2.jpg"],"caption":"sunset","hashtags":["beach"],"comments":[{"comment_id":"c4","user_id":"u4","text":"nice"},{"comment_id":"c5","user_id":"u5","text":"wow"},{"comment_id":"c6","user_id":"u6","text":"love it"},{"comment_id":"c7","user_id":"u4","text":"again"}]}
{"kind":"post","post_id":"p3","author_id":"a3","image_refs":[],"caption":"","hashtags":[],"comments":[]}
{"kind":"user","user_id":"d1","bio":"plug 🍄 kik me","posts":[{"image_ref":"d1-a.jpg","posted_at":1},{"image_ref":"d1-b.jpg","posted_at":5}]}
{"kind":"user","user_id":"u4","bio":"","posts":[]}
"##;

fn corpus() -> Corpus {
    Corpus::parse(CORPUS).unwrap()
}

fn tokens() -> BTreeMap<String, String> {
    BTreeMap::from([("tok-ann".to_string(), "ann".to_string()), ("tok-bob".to_string(), "bob".to_string())])
}

fn app(store: Store, dir: &std::path::Path) -> axum::Router {
    router(AppState::new(store, tokens(), dir.join("exports")))
}

async fn call(app: &axum::Router, method: &str, uri: &str, token: Option<&str>, body: Option<Value>) -> (StatusCode, Value) {
    let mut req = Request::builder().method(method).uri(uri);
    if let Some(t) = token {
        req = req.header("authorization", format!("Bearer {t}"));
    }
    let req = match body {
        Some(b) => req
            .header("content-type", "application/json")
            .body(Body::from(b.to_string()))
            .unwrap(),
        None => req.body(Body::empty()).unwrap(),
    };
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() {
        Value::Null
    } else {
        serde_json::from_slice(&bytes).unwrap_or_else(|_| json!(String::from_utf8_lossy(&bytes)))
    };
    (status, value)
}

fn p1_two_dealers() -> Value {
    json!({
        "image_annotations": [{"image_ref": "p1.jpg", "drug_form": "lsd", "contact_app": "wickr"}],
        "comment_annotations": [
            {"comment_id": "c1", "role": "dealer", "has_contact_info": true},
            {"comment_id": "c2", "role": "dealer", "has_contact_info": true},
            {"comment_id": "c3", "role": "consumer", "has_contact_info": false}
        ],
        "verdict": {"contains_dealer": true, "dealer_user_ids": ["d1", "d2"]}
    })
}

fn p2_clean() -> Value {
    json!({
        "image_annotations": [{"image_ref": "p2.jpg", "drug_form": "none", "contact_app": "none"}],
        "comment_annotations": [],
        "verdict": {"contains_dealer": false, "dealer_user_ids": []}
    })
}

#[tokio::test]
async fn requests_without_a_known_token_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(Store::in_memory(corpus()), dir.path());
    for token in [None, Some("nope")] {
        let (status, body) = call(&app, "GET", "/api/v1/tasks/next", token, None).await;
        assert_eq!(status, StatusCode::UNAUTHORIZED);
        assert_eq!(body["code"], "unauthorized");
    }
}

#[tokio::test]
async fn full_annotation_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(Store::in_memory(corpus()), dir.path());

    let (status, body) = call(&app, "GET", "/api/v1/tasks/next", Some("tok-ann"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["task"]["task_id"], "p1");
    assert_eq!(body["task"]["status"], "in_progress");
    // Asking again returns the same open task.
    let (_, again) = call(&app, "GET", "/api/v1/tasks/next", Some("tok-ann"), None).await;
    assert_eq!(again["task"]["task_id"], "p1");
    // Another annotator gets the next post.
    let (_, bob) = call(&app, "GET", "/api/v1/tasks/next", Some("tok-bob"), None).await;
    assert_eq!(bob["task"]["task_id"], "p2");

    let (status, _) = call(&app, "POST", "/api/v1/tasks/p1/submit", Some("tok-bob"), Some(p1_two_dealers())).await;
    assert_eq!(status, StatusCode::CONFLICT);

    let (status, out) = call(&app, "POST", "/api/v1/tasks/p1/submit", Some("tok-ann"), Some(p1_two_dealers())).await;
    assert_eq!(status, StatusCode::OK, "{out}");
    assert_eq!(out["revision"], 1);
    let (status, out) = call(&app, "POST", "/api/v1/tasks/p2/submit", Some("tok-bob"), Some(p2_clean())).await;
    assert_eq!(status, StatusCode::OK, "{out}");

    let (_, stats) = call(&app, "GET", "/api/v1/stats", Some("tok-ann"), None).await;
    assert_eq!(stats["done"], 2);
    assert_eq!(stats["unlabeled"], 1);
    assert_eq!(stats["posts_with_dealer"], 1);

    let (status, exp) = call(&app, "POST", "/api/v1/export", Some("tok-ann"), Some(json!({"file_name": "out.jsonl"}))).await;
    assert_eq!(status, StatusCode::OK, "{exp}");
    // p1: d1 and d2 positive, u3 negative. p2: three distinct commenters.
    assert_eq!(exp["positives"], 2);
    assert_eq!(exp["negatives"], 4);
    let ds = quadfuse_core::record::load_dataset(exp["path"].as_str().unwrap()).unwrap();
    assert_eq!(ds.len(), 6);
    let d1 = ds.records.iter().find(|r| r.user_id == "d1").unwrap();
    assert_eq!(d1.label, Label::Dealer);
    assert_eq!(d1.pc_text.as_deref(), Some("wickr me"));
    assert_eq!(d1.pi_ref.as_deref(), Some("p1.jpg"));
    assert_eq!(d1.hb_text.as_deref(), Some("plug 🍄 kik me"));
    assert_eq!(d1.hi_refs, ["d1-b.jpg", "d1-a.jpg"]);
    assert!(d1.hashtags.contains("lsd"));
    let u4 = ds.records.iter().find(|r| r.user_id == "u4").unwrap();
    assert_eq!(u4.label, Label::NonDealer);
    assert_eq!(u4.pc_text.as_deref(), Some("nice\nagain"));
    assert!(u4.hb_text.is_none());
}

#[tokio::test]
async fn validation_errors_carry_the_field_path() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(Store::in_memory(corpus()), dir.path());
    call(&app, "GET", "/api/v1/tasks/next", Some("tok-ann"), None).await;
    let mut bad = p1_two_dealers();
    bad["image_annotations"][0]["contact_app"] = json!("signal");
    let (status, body) = call(&app, "POST", "/api/v1/tasks/p1/submit", Some("tok-ann"), Some(bad)).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(body["code"], "validation");
    assert_eq!(body["field"], "image_annotations[0].contact_app");

    let mut bad = p1_two_dealers();
    bad["verdict"]["dealer_user_ids"] = json!(["d1"]);
    let (status, body) = call(&app, "POST", "/api/v1/tasks/p1/submit", Some("tok-ann"), Some(bad)).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(body["field"], "comment_annotations[1].role");

    let (status, body) = call(&app, "POST", "/api/v1/tasks/zzz/submit", Some("tok-ann"), Some(p2_clean())).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(body["code"], "not_found");

    let req = Request::builder()
        .method("POST")
        .uri("/api/v1/tasks/p1/submit")
        .header("authorization", "Bearer tok-ann")
        .header("content-type", "application/json")
        .body(Body::from("{not json"))
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    assert_eq!(resp.status(), StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn resubmission_makes_revisions_and_idempotency_keys_dedupe() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(Store::in_memory(corpus()), dir.path());
    call(&app, "GET", "/api/v1/tasks/next", Some("tok-ann"), None).await;
    let mut first = p1_two_dealers();
    first["idempotency_key"] = json!("k1");
    let (_, a) = call(&app, "POST", "/api/v1/tasks/p1/submit", Some("tok-ann"), Some(first.clone())).await;
    let (_, b) = call(&app, "POST", "/api/v1/tasks/p1/submit", Some("tok-ann"), Some(first)).await;
    assert_eq!(a["revision"], 1);
    assert_eq!(b["revision"], 1);
    assert_eq!(b["replayed"], true);

    let mut second = p1_two_dealers();
    second["idempotency_key"] = json!("k2");
    let (_, c) = call(&app, "POST", "/api/v1/tasks/p1/submit", Some("tok-ann"), Some(second)).await;
    assert_eq!(c["revision"], 2);
    let (_, task) = call(&app, "GET", "/api/v1/tasks/p1", Some("tok-bob"), None).await;
    assert_eq!(task["revisions"], 2);
    assert_eq!(task["latest"]["submission"]["idempotency_key"], "k2");

    // Someone else must reopen before changing it.
    let (status, _) = call(&app, "POST", "/api/v1/tasks/p1/submit", Some("tok-bob"), Some(p1_two_dealers())).await;
    assert_eq!(status, StatusCode::CONFLICT);
    let (status, _) = call(&app, "POST", "/api/v1/tasks/p1/reopen", Some("tok-bob"), None).await;
    assert_eq!(status, StatusCode::OK);
    let (_, d) = call(&app, "POST", "/api/v1/tasks/p1/submit", Some("tok-bob"), Some(p1_two_dealers())).await;
    assert_eq!(d["revision"], 3);
}

#[tokio::test]
async fn release_returns_a_task_to_the_queue() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(Store::in_memory(corpus()), dir.path());
    call(&app, "GET", "/api/v1/tasks/next", Some("tok-ann"), None).await;
    let (status, _) = call(&app, "POST", "/api/v1/tasks/p1/release", Some("tok-bob"), None).await;
    assert_eq!(status, StatusCode::CONFLICT);
    let (status, t) = call(&app, "POST", "/api/v1/tasks/p1/release", Some("tok-ann"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(t["status"], "unlabeled");
    let (_, next) = call(&app, "GET", "/api/v1/tasks/next", Some("tok-bob"), None).await;
    assert_eq!(next["task"]["task_id"], "p1");
}

#[tokio::test]
async fn queue_reports_when_nothing_is_left() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(Store::in_memory(corpus()), dir.path());
    for expected in ["p1", "p2", "p3"] {
        let (_, t) = call(&app, "GET", "/api/v1/tasks/next", Some("tok-ann"), None).await;
        assert_eq!(t["task"]["task_id"], expected);
        let payload = match expected {
            "p1" => p1_two_dealers(),
            "p2" => p2_clean(),
            _ => json!({"image_annotations": [], "comment_annotations": [], "verdict": {"contains_dealer": false, "dealer_user_ids": []}}),
        };
        let (status, out) = call(&app, "POST", &format!("/api/v1/tasks/{expected}/submit"), Some("tok-ann"), Some(payload)).await;
        assert_eq!(status, StatusCode::OK, "{out}");
    }
    let (status, body) = call(&app, "GET", "/api/v1/tasks/next", Some("tok-ann"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["status"], "none_remaining");
}

#[tokio::test]
async fn homepage_and_unknown_routes() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(Store::in_memory(corpus()), dir.path());
    let (status, home) = call(&app, "GET", "/api/v1/users/d1/homepage", Some("tok-ann"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(home["image_refs"], json!(["d1-b.jpg", "d1-a.jpg"]));
    let (status, body) = call(&app, "GET", "/api/v1/users/ghost/homepage", Some("tok-ann"), None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(body["code"], "not_found");
    let (status, _) = call(&app, "GET", "/api/v2/stats", Some("tok-ann"), None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn export_refuses_paths_outside_its_directory() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(Store::in_memory(corpus()), dir.path());
    for name in ["../escape.jsonl", "/etc/passwd", ".hidden", "a/b"] {
        let (status, body) = call(&app, "POST", "/api/v1/export", Some("tok-ann"), Some(json!({"file_name": name}))).await;
        assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY, "{name}");
        assert_eq!(body["field"], "file_name");
    }
    let (status, body) = call(&app, "POST", "/api/v1/export", Some("tok-ann"), None).await;
    assert_eq!(status, StatusCode::OK, "{body}");
    assert_eq!(body["records"], 0);
}

#[tokio::test]
async fn replaying_the_log_restores_identical_state() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("events.jsonl");
    let first = {
        let app = app(Store::open(corpus(), &log).unwrap(), dir.path());
        call(&app, "GET", "/api/v1/tasks/next", Some("tok-ann"), None).await;
        call(&app, "POST", "/api/v1/tasks/p1/submit", Some("tok-ann"), Some(p1_two_dealers())).await;
        call(&app, "GET", "/api/v1/tasks/next", Some("tok-bob"), None).await;
        call(&app, "POST", "/api/v1/tasks/p2/submit", Some("tok-bob"), Some(p2_clean())).await;
        call(&app, "POST", "/api/v1/tasks/p1/submit", Some("tok-ann"), Some(p1_two_dealers())).await;
        call(&app, "GET", "/api/v1/tasks/next", Some("tok-bob"), None).await;
        let (_, stats) = call(&app, "GET", "/api/v1/stats", Some("tok-ann"), None).await;
        let (_, p1) = call(&app, "GET", "/api/v1/tasks/p1", Some("tok-ann"), None).await;
        (stats, p1)
    };
    let app2 = app(Store::open(corpus(), &log).unwrap(), dir.path());
    let (_, stats) = call(&app2, "GET", "/api/v1/stats", Some("tok-ann"), None).await;
    let (_, p1) = call(&app2, "GET", "/api/v1/tasks/p1", Some("tok-ann"), None).await;
    assert_eq!((stats, p1), first);
    // bob's open task survives the restart.
    let (_, next) = call(&app2, "GET", "/api/v1/tasks/next", Some("tok-bob"), None).await;
    assert_eq!(next["task"]["task_id"], "p3");
}

#[test]
fn torn_final_line_is_truncated() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("events.jsonl");
    {
        let mut store = Store::open(corpus(), &log).unwrap();
        store.next_task("ann").unwrap();
    }
    let intact = std::fs::read_to_string(&log).unwrap();
    std::fs::write(&log, format!("{intact}{{\"seq\":2,\"type\":\"sub")).unwrap();
    let mut store = Store::open(corpus(), &log).unwrap();
    assert_eq!(std::fs::read_to_string(&log).unwrap(), intact);
    store.next_task("bob").unwrap();
    let reopened = Store::open(corpus(), &log).unwrap();
    assert_eq!(reopened.stats().in_progress, 2);

    // Corruption in the middle is not silently dropped.
    let text = std::fs::read_to_string(&log).unwrap();
    std::fs::write(&log, format!("garbage\n{text}")).unwrap();
    assert!(Store::open(corpus(), &log).is_err());
}

#[test]
fn log_rejects_events_that_do_not_apply() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("events.jsonl");
    std::fs::write(&log, "{\"seq\":1,\"type\":\"release\",\"task_id\":\"p1\",\"annotator\":\"ann\"}\n").unwrap();
    assert!(Store::open(corpus(), &log).is_err());
    std::fs::write(&log, "{\"seq\":2,\"type\":\"assign\",\"task_id\":\"p1\",\"annotator\":\"ann\"}\n").unwrap();
    assert!(Store::open(corpus(), &log).is_err());
}

#[test]
fn state_is_shared_behind_an_arc() {
    let state = AppState::new(Store::in_memory(corpus()), tokens(), "/tmp/unused");
    let other = Arc::clone(&state);
    other.store.lock().unwrap().next_task("ann").unwrap();
    assert_eq!(state.store.lock().unwrap().stats().in_progress, 1);
}
