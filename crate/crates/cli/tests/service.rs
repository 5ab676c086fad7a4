mod common;

use std::sync::Arc;

use axum::body::{to_bytes, Body};
use axum::http::{Request, StatusCode};
use clozegen_cli::api::GenerationResponse;
use clozegen_cli::service::{router, AppState};
use clozegen_core::ranker::{rank, RankConfig};
use clozegen_core::RankModel;
use serde_json::{json, Value};
use tower::ServiceExt;

struct Harness {
    _fx: common::Fixture,
    state: Arc<AppState>,
    item: clozegen_core::ClozeItem,
}

fn harness() -> Harness {
    let fx = common::Fixture::new();
    let state = Arc::new(AppState::load(&fx.config()).unwrap());
    let item = fx.first_test_item();
    Harness { _fx: fx, state, item }
}

async fn call(state: &Arc<AppState>, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Vec<u8>) {
    let req = Request::builder().method(method).uri(uri).header("content-type", "application/json");
    let req = match body {
        Some(b) => req.body(Body::from(b.to_string())).unwrap(),
        None => req.body(Body::empty()).unwrap(),
    };
    let resp = router(state.clone()).oneshot(req).await.unwrap();
    let status = resp.status();
    (status, to_bytes(resp.into_body(), usize::MAX).await.unwrap().to_vec())
}

fn json_of(bytes: &[u8]) -> Value {
    serde_json::from_slice(bytes).unwrap()
}

#[tokio::test]
async fn health_reports_model_and_schema() {
    let h = harness();
    let (s, b) = call(&h.state, "GET", "/v1/health", None).await;
    assert_eq!(s, StatusCode::OK);
    let v = json_of(&b);
    assert_eq!(v["status"], "ok");
    assert_eq!(v["model_id"], "listwise");
    assert_eq!(v["schema_version"], clozegen_core::features::SCHEMA_VERSION);
}

#[tokio::test]
async fn models_lists_the_default() {
    let h = harness();
    let (s, b) = call(&h.state, "GET", "/v1/models", None).await;
    assert_eq!(s, StatusCode::OK);
    let v = json_of(&b);
    assert_eq!(v["default"], "listwise");
    assert_eq!(v["models"][0]["kind"], "lambdamart_listwise");
}

#[tokio::test]
async fn generation_matches_in_process_rank() {
    let h = harness();
    let body = json!({"stem": h.item.stem, "key": h.item.key, "n": 3});
    let (s, b) = call(&h.state, "POST", "/v1/distractors", Some(body)).await;
    assert_eq!(s, StatusCode::OK);
    let resp: GenerationResponse = serde_json::from_slice(&b).unwrap();
    assert_eq!(resp.distractors.len(), 3);
    assert!(resp.timing_ms.is_some());
    assert!(resp.distractors.windows(2).all(|w| w[0].score >= w[1].score));
    assert_eq!(resp.distractors.iter().map(|d| d.rank).collect::<Vec<_>>(), vec![1, 2, 3]);

    let p = &h.state.pipeline;
    let model: &RankModel = &h.state.models[&h.state.default_model];
    let set = p.candidates(&h.item.stem, &h.item.key).unwrap();
    let direct = rank(model, &h.item.stem, &h.item.key, &set, Some(&p.taxonomy), &p.resources, &RankConfig { n: 3, ..p.rank.clone() });
    assert_eq!(direct.entries.len(), 3);
    for (d, e) in resp.distractors.iter().zip(&direct.entries) {
        assert_eq!(d.surface, e.surface);
        assert_eq!(d.score.to_bits(), e.score.to_bits());
    }
}

#[tokio::test]
async fn identical_requests_give_identical_bodies() {
    let h = harness();
    let body = json!({"stem": h.item.stem, "key": h.item.key, "n": 5});
    let strip = |b: Vec<u8>| {
        let mut v = json_of(&b);
        v.as_object_mut().unwrap().remove("timing_ms");
        v
    };
    let a = strip(call(&h.state, "POST", "/v1/distractors", Some(body.clone())).await.1);
    let b = strip(call(&h.state, "POST", "/v1/distractors", Some(body)).await.1);
    assert_eq!(a, b);
}

#[tokio::test]
async fn unknown_key_uses_fallback() {
    let h = harness();
    let stem = h.item.stem.clone();
    let (s, b) = call(&h.state, "POST", "/v1/distractors", Some(json!({"stem": stem, "key": "zzyzx"}))).await;
    assert_eq!(s, StatusCode::OK);
    let resp: GenerationResponse = serde_json::from_slice(&b).unwrap();
    assert!(resp.fallback_used);
    assert!(resp.fallback_reason.is_some());
    assert!(resp.distractors.len() <= 3);
}

#[tokio::test]
async fn bad_requests_name_the_field() {
    let h = harness();
    let (s, b) = call(&h.state, "POST", "/v1/distractors", Some(json!({"stem": "no blank", "key": "x"}))).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(json_of(&b)["field"], "stem");

    let (s, b) = call(&h.state, "POST", "/v1/distractors", Some(json!({"stem": "a ____ b", "key": "x", "n": 0}))).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(json_of(&b)["field"], "n");

    let (s, b) = call(
        &h.state,
        "POST",
        "/v1/distractors",
        Some(json!({"stem": "a ____ b", "key": "x", "options": {"model_id": "nope"}})),
    )
    .await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert_eq!(json_of(&b)["error"], "unknown_model");

    let req = Request::builder().method("POST").uri("/v1/distractors").body(Body::from("{not json")).unwrap();
    let resp = router(h.state.clone()).oneshot(req).await.unwrap();
    assert_eq!(resp.status(), StatusCode::BAD_REQUEST);
}

fn verdict(stem: &str, key: &str, cand: &str, v: &str) -> Value {
    json!({"request": {"stem": stem, "key": key}, "candidate": cand, "verdict": v, "session_id": "s1"})
}

#[tokio::test]
async fn edited_without_replacement_is_rejected() {
    let h = harness();
    let (s, b) = call(&h.state, "POST", "/v1/feedback", Some(verdict("a ____ b", "x", "y", "edited"))).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    let v = json_of(&b);
    assert_eq!(v["error"], "invalid_feedback");
    assert_eq!(v["field"], "replacement");
    assert!(h.state.feedback.lock().unwrap().records().is_empty());
}

#[tokio::test]
async fn feedback_exports_one_group() {
    let h = harness();
    let (stem, key) = (h.item.stem.as_str(), h.item.key.as_str());
    for (c, v) in [("alpha", "accepted"), ("beta", "accepted"), ("gamma", "rejected")] {
        let (s, b) = call(&h.state, "POST", "/v1/feedback", Some(verdict(stem, key, c, v))).await;
        assert_eq!(s, StatusCode::CREATED);
        assert!(json_of(&b)["id"].is_u64());
    }
    let (s, b) = call(&h.state, "GET", "/v1/feedback/export", None).await;
    assert_eq!(s, StatusCode::OK);
    let groups = clozegen_core::ranker::groups::read_groups(&b[..]).unwrap();
    assert_eq!(groups.len(), 1);
    assert_eq!(groups[0].positives(), 2);
    assert_eq!(groups[0].rows.len() - groups[0].positives(), 1);

    let (_, b) = call(&h.state, "GET", "/v1/feedback/export?session_id=other", None).await;
    assert!(b.is_empty());
}

#[tokio::test]
async fn accept_then_export_gives_one_relevant_row() {
    let h = harness();
    call(&h.state, "POST", "/v1/feedback", Some(verdict("The ____ ran.", "dog", "cat", "accepted"))).await;
    let (_, b) = call(&h.state, "GET", "/v1/feedback/export", None).await;
    let groups = clozegen_core::ranker::groups::read_groups(&b[..]).unwrap();
    assert_eq!(groups.len(), 1);
    assert_eq!(groups[0].rows.len(), 1);
    assert_eq!(groups[0].rows[0].relevance, 1);
    assert_eq!(groups[0].rows[0].surface, "cat");
}

#[tokio::test]
async fn concurrent_feedback_is_serialized() {
    let h = harness();
    let mut tasks = Vec::new();
    for i in 0..16 {
        let st = h.state.clone();
        tasks.push(tokio::spawn(async move {
            call(&st, "POST", "/v1/feedback", Some(verdict("The ____ ran.", "dog", &format!("c{i}"), "rejected"))).await.0
        }));
    }
    for t in tasks {
        assert_eq!(t.await.unwrap(), StatusCode::CREATED);
    }
    let path = h.state.feedback.lock().unwrap().path().to_path_buf();
    let lines = std::fs::read_to_string(path).unwrap().lines().count();
    assert_eq!(lines, 16);
    let mut ids: Vec<u64> = h.state.feedback.lock().unwrap().records().iter().map(|r| r.id).collect();
    ids.sort();
    ids.dedup();
    assert_eq!(ids.len(), 16);
}

#[test]
fn missing_resource_fails_fast() {
    let fx = common::Fixture::new();
    let mut cfg = fx.config();
    cfg.resources.topic_model = Some(fx.dir.path().join("absent.json"));
    let err = AppState::load(&cfg).err().expect("load must fail");
    assert!(err.to_string().contains("absent.json"), "{err}");
}
