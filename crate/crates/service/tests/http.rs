use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use gluing_core::Tower;
use gluing_service::{router, Registry, StimulusSet, Store};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

fn registry() -> Registry {
    let t = |xs: &[f64]| Tower::stacked(xs, 0.4, 0.2).unwrap();
    Registry::new().with(StimulusSet::new(
        "small",
        vec![t(&[0.0, 0.45]), t(&[0.0, 0.3, 0.75])],
        vec![t(&[0.0, 0.1, 0.55]), t(&[0.0, 0.5]), t(&[0.0, -0.5, -0.1]), t(&[0.0, 0.2])],
    ))
}

async fn call(app: &axum::Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder().method(method).uri(uri).header("content-type", "application/json");
    let req = match body {
        Some(b) => req.body(Body::from(b.to_string())).unwrap(),
        None => req.body(Body::empty()).unwrap(),
    };
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let ndjson = resp.headers().get("content-type").is_some_and(|c| c == "application/x-ndjson");
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    if ndjson {
        return (status, Value::String(String::from_utf8(bytes.to_vec()).unwrap()));
    }
    let v = serde_json::from_slice(&bytes).unwrap_or_else(|_| Value::String(String::from_utf8_lossy(&bytes).into()));
    (status, v)
}

fn app(dir: &std::path::Path) -> axum::Router {
    router(Arc::new(Store::open(dir, registry(), 7).unwrap()), None)
}

#[tokio::test]
async fn full_session_flow() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let (st, v) = call(&app, "POST", "/sessions", Some(json!({"participant": "p1", "stimulus_set": "small"}))).await;
    assert_eq!(st, StatusCode::OK);
    let id = v["session_id"].as_str().unwrap().to_string();
    assert_eq!(v["trial"]["n_trials"], 6);
    assert_eq!(v["trial"]["block"], "practice");
    assert_eq!(v["trial"]["blocks"].as_array().unwrap().len(), 1 + 0 + 1);

    let act = format!("/sessions/{id}/act");
    let (st, v) = call(&app, "POST", &act, Some(json!({"a": 0, "b": 1, "t_select_a_ms": 100.0, "t_select_b_ms": 250.5}))).await;
    assert_eq!(st, StatusCode::OK);
    assert_eq!(v["event"], "glue_applied");
    assert_eq!(v["delta"], -1);
    assert_eq!(v["glue_bits"], "10");
    let (_, v) = call(&app, "POST", &act, Some(json!({"a": 1, "b": 0}))).await;
    assert_eq!(v["event"], "glue_removed");
    let (_, v) = call(&app, "POST", &act, Some(json!({"a": 0, "b": 2}))).await;
    assert_eq!(v["event"], "invalid_pair");
    assert_eq!(v["delta"], -1);
    assert_eq!(v["glue_bits"], "00");
    assert_eq!(v["points"], -3);

    let (_, t) = call(&app, "GET", &format!("/sessions/{id}/trial"), None).await;
    assert_eq!(t["points"], -3);

    let finish = format!("/sessions/{id}/finish_trial");
    let (st, f) = call(&app, "POST", &finish, None).await;
    assert_eq!(st, StatusCode::OK);
    // The unglued overhanging top block falls.
    assert_eq!(f["fallen_ids"], json!([2]));
    assert_eq!(f["standing"], 1);
    assert_eq!(f["glue_cost"], 3);
    assert_eq!(f["bonus"], 0);
    assert_eq!(f["total"], -2);
    assert_eq!(f["next_trial"]["index"], 1);

    let mut last = f;
    while last["complete"] == false {
        let (_, v) = call(&app, "POST", &act, Some(json!({"a": 1, "b": 2}))).await;
        assert_eq!(v["event"], "glue_applied");
        let (_, f) = call(&app, "POST", &finish, None).await;
        last = f;
    }
    assert!(last["next_trial"].is_null());
    assert!(last["max_total"].as_i64().unwrap() >= last["total"].as_i64().unwrap());
    let (st, e) = call(&app, "POST", &act, Some(json!({"a": 0, "b": 1}))).await;
    assert_eq!(st, StatusCode::CONFLICT);
    assert_eq!(e["error"]["code"], "wrong_phase");

    let (st, export) = call(&app, "GET", &format!("/sessions/{id}/export"), None).await;
    assert_eq!(st, StatusCode::OK);
    let lines: Vec<Value> = export.as_str().unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines[0]["participant"], "p1");
    let kinds: Vec<&str> = lines[1..].iter().map(|l| l["kind"].as_str().unwrap()).collect();
    assert_eq!(kinds[..3], ["select_object", "select_object", "glue_applied"]);
    assert_eq!(kinds.iter().filter(|&&k| k == "trial_scored").count(), 6);
    assert_eq!(kinds.iter().filter(|&&k| k == "transcript").count(), 6);
    assert_eq!(lines[1]["client_ms"], 100.0);
}

#[tokio::test]
async fn errors_are_machine_readable() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let (st, e) = call(&app, "POST", "/sessions", Some(json!({"participant": "p", "stimulus_set": "nope"}))).await;
    assert_eq!(st, StatusCode::NOT_FOUND);
    assert_eq!(e["error"]["code"], "unknown_stimulus_set");
    let (st, e) = call(&app, "GET", "/sessions/missing/trial", None).await;
    assert_eq!(st, StatusCode::NOT_FOUND);
    assert_eq!(e["error"]["code"], "unknown_session");
    let (st, e) = call(&app, "POST", "/sessions", Some(json!({"participant": 3}))).await;
    assert_eq!(st, StatusCode::BAD_REQUEST);
    assert_eq!(e["error"]["code"], "bad_request");

    let (_, v) = call(&app, "POST", "/sessions", Some(json!({"participant": "p", "stimulus_set": "small"}))).await;
    let id = v["session_id"].as_str().unwrap();
    let (st, e) = call(&app, "POST", &format!("/sessions/{id}/act"), Some(json!({"a": 1, "b": 1}))).await;
    assert_eq!(st, StatusCode::BAD_REQUEST);
    assert_eq!(e["error"]["code"], "malformed_ids");
    let (st, _) = call(&app, "POST", &format!("/sessions/{id}/act"), Some(json!({"a": 0, "b": 9}))).await;
    assert_eq!(st, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn sessions_are_isolated_and_ordered_by_seed() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let mk = |seed: u64| json!({"participant": "p", "stimulus_set": "small", "seed": seed});
    let (_, a) = call(&app, "POST", "/sessions", Some(mk(1))).await;
    let (_, b) = call(&app, "POST", "/sessions", Some(mk(2))).await;
    let (ia, ib) = (a["session_id"].as_str().unwrap(), b["session_id"].as_str().unwrap());
    assert_ne!(ia, ib);
    call(&app, "POST", &format!("/sessions/{ia}/act"), Some(json!({"a": 0, "b": 1}))).await;
    let (_, tb) = call(&app, "GET", &format!("/sessions/{ib}/trial"), None).await;
    assert_eq!(tb["glue_bits"], "00");
    assert_eq!(tb["points"], 0);
    // Same practice tower first for everyone.
    assert_eq!(a["trial"]["blocks"], b["trial"]["blocks"]);
}

#[tokio::test]
async fn fresh_export_is_header_only_and_exports_grow() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let (_, v) = call(&app, "POST", "/sessions", Some(json!({"participant": "p", "stimulus_set": "small"}))).await;
    let id = v["session_id"].as_str().unwrap();
    let (_, e0) = call(&app, "GET", &format!("/sessions/{id}/export"), None).await;
    assert_eq!(e0.as_str().unwrap().lines().count(), 1);
    call(&app, "POST", &format!("/sessions/{id}/act"), Some(json!({"a": 0, "b": 1}))).await;
    call(&app, "POST", &format!("/sessions/{id}/finish_trial"), None).await;
    let (_, e1) = call(&app, "GET", &format!("/sessions/{id}/export"), None).await;
    let e1 = e1.as_str().unwrap().to_string();
    // header, 2 selects, glue, gravity, score, transcript
    assert_eq!(e1.lines().count(), 7);
    call(&app, "POST", &format!("/sessions/{id}/finish_trial"), None).await;
    let (_, e2) = call(&app, "GET", &format!("/sessions/{id}/export"), None).await;
    let later: Vec<&str> = e2.as_str().unwrap().lines().collect();
    assert!(e1.lines().all(|l| later.contains(&l)));
}

#[tokio::test]
async fn restart_resumes_mid_session() {
    let dir = tempfile::tempdir().unwrap();
    let id;
    {
        let app = app(dir.path());
        let (_, v) = call(&app, "POST", "/sessions", Some(json!({"participant": "p", "stimulus_set": "small"}))).await;
        id = v["session_id"].as_str().unwrap().to_string();
        call(&app, "POST", &format!("/sessions/{id}/act"), Some(json!({"a": 0, "b": 1}))).await;
        call(&app, "POST", &format!("/sessions/{id}/finish_trial"), None).await;
        call(&app, "POST", &format!("/sessions/{id}/act"), Some(json!({"a": 1, "b": 2}))).await;
    }
    let app = app(dir.path());
    let (st, t) = call(&app, "GET", &format!("/sessions/{id}/trial"), None).await;
    assert_eq!(st, StatusCode::OK);
    assert_eq!(t["index"], 1);
    assert_eq!(t["glue_bits"], "010");
    assert_eq!(t["points"], -1);
    let (_, v) = call(&app, "POST", "/sessions", Some(json!({"participant": "q", "stimulus_set": "small"}))).await;
    assert_ne!(v["session_id"].as_str().unwrap(), id);
}

#[tokio::test]
async fn static_files_are_served() {
    let dir = tempfile::tempdir().unwrap();
    let web = tempfile::tempdir().unwrap();
    std::fs::write(web.path().join("index.html"), "<html>ui</html>").unwrap();
    let app = router(Arc::new(Store::open(dir.path(), registry(), 0).unwrap()), Some(web.path().to_path_buf()));
    let (st, v) = call(&app, "GET", "/index.html", None).await;
    assert_eq!(st, StatusCode::OK);
    assert_eq!(v, "<html>ui</html>");
    let (st, v) = call(&app, "GET", "/", None).await;
    assert_eq!(st, StatusCode::OK);
    assert_eq!(v, "<html>ui</html>");
}
