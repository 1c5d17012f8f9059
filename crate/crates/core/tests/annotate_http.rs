mod common;

use std::path::Path;
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use common::five_pair_sample;
use satd_link::annotate::{router, AnnotateService, LabelStore};
use satd_link::jsonl::write_jsonl;

fn app(labels: &Path) -> Router {
    router(Arc::new(
        AnnotateService::new(five_pair_sample(), LabelStore::open(labels).unwrap()).unwrap(),
    ))
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder().method(method).uri(uri);
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
    let value = serde_json::from_slice(&bytes).unwrap_or_else(|_| Value::String(String::from_utf8_lossy(&bytes).into()));
    (status, value)
}

async fn next(app: &Router, who: &str) -> Value {
    let (s, v) = call(app, "GET", &format!("/api/pairs/next?annotator={who}"), None).await;
    assert_eq!(s, StatusCode::OK);
    v
}

async fn label(app: &Router, who: &str, pair_id: &str, label: &str) -> (StatusCode, Value) {
    call(
        app,
        "POST",
        "/api/labels",
        Some(json!({ "pair_id": pair_id, "annotator": who, "label": label })),
    )
    .await
}

fn pair_id(v: &Value) -> String {
    v["pair"]["pair_id"].as_str().unwrap().to_string()
}

#[tokio::test]
async fn next_pair_is_idempotent_and_carries_pair_details() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(&dir.path().join("labels.jsonl"));
    let v = next(&app, "a").await;
    assert_eq!(v["status"], "pair");
    assert_eq!(v["index"], 0);
    assert_eq!(v["total"], 5);
    for field in ["origin", "target", "via_link", "similarity"] {
        assert!(!v["pair"][field].is_null(), "missing {field}");
    }
    assert!(v["similarity_bin"].as_u64().unwrap() < 10);
    assert_eq!(next(&app, "a").await, v);
}

#[tokio::test]
async fn two_annotators_each_see_the_full_sequence() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(&dir.path().join("labels.jsonl"));
    let sample_ids: Vec<String> = five_pair_sample().into_iter().map(|p| p.pair_id).collect();
    let mut seen_a = Vec::new();
    let mut seen_b = Vec::new();
    for _ in 0..5 {
        let va = next(&app, "alice").await;
        seen_a.push(pair_id(&va));
        assert_eq!(label(&app, "alice", seen_a.last().unwrap(), "none").await.0, StatusCode::OK);
        let vb = next(&app, "bob").await;
        seen_b.push(pair_id(&vb));
        assert_eq!(label(&app, "bob", seen_b.last().unwrap(), "duplication").await.0, StatusCode::OK);
    }
    assert_eq!(seen_a, sample_ids);
    assert_eq!(seen_b, sample_ids);
    let done = next(&app, "alice").await;
    assert_eq!(done["status"], "exhausted");
    assert_eq!(done["counts"]["none"], 5);
}

#[tokio::test]
async fn scripted_session_counts_and_agreement() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(&dir.path().join("labels.jsonl"));
    let mut last = Value::Null;
    for key in ["duplication", "repayment", "none", "skip", "duplication"] {
        let id = pair_id(&next(&app, "a").await);
        let (s, v) = label(&app, "a", &id, key).await;
        assert_eq!(s, StatusCode::OK);
        last = v;
    }
    assert_eq!(
        last["counts"],
        json!({ "labeled": 5, "duplication": 2, "repayment": 1, "none": 1, "skip": 1 })
    );

    let ids: Vec<String> = five_pair_sample().into_iter().map(|p| p.pair_id).collect();
    let a = ["duplication", "repayment", "none", "duplication", "none"];
    let b = ["duplication", "repayment", "duplication", "duplication", "none"];
    for i in 0..5 {
        label(&app, "x", &ids[i], a[i]).await;
        label(&app, "y", &ids[i], b[i]).await;
    }
    // Observed agreement 4/5; chance agreement (2*1 + 2*3 + 1*1)/25 = 9/25.
    let want = (0.8 - 0.36) / (1.0 - 0.36);
    let (s, v) = call(&app, "GET", "/api/agreement?a=x&b=y", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["overlap"], 5);
    assert!((v["kappa"].as_f64().unwrap() - want).abs() < 1e-12);
    assert_eq!(v["band"], "substantial");

    let (s, v) = call(&app, "GET", "/api/agreement?a=x&b=nobody", None).await;
    assert_eq!(s, StatusCode::CONFLICT);
    assert!(v["error"].as_str().unwrap().contains("no labeled pairs in common"));

    let (_, v) = call(&app, "GET", "/api/progress", None).await;
    assert_eq!(v["total"], 5);
    assert_eq!(v["annotators"]["a"]["skip"], 1);
    assert_eq!(v["annotators"]["y"]["duplication"], 3);
}

#[tokio::test]
async fn validation_errors() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(&dir.path().join("labels.jsonl"));
    let id = pair_id(&next(&app, "a").await);

    let (s, v) = label(&app, "a", &id, "maybe").await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(v["allowed"], json!(["none", "duplication", "repayment", "skip"]));
    for allowed in ["none", "duplication", "repayment", "skip"] {
        assert!(v["error"].as_str().unwrap().contains(allowed));
    }

    let (s, _) = label(&app, "a", "no-such-pair", "none").await;
    assert_eq!(s, StatusCode::NOT_FOUND);

    let (s, _) = call(&app, "POST", "/api/labels", Some(json!({ "pair_id": id, "label": "none" }))).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    let (s, _) = call(&app, "GET", "/api/pairs/next", None).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    let (s, _) = call(&app, "GET", "/api/agreement?a=x", None).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);

    let req = Request::builder()
        .method("POST")
        .uri("/api/labels")
        .body(Body::from("{not json"))
        .unwrap();
    assert_eq!(app.clone().oneshot(req).await.unwrap().status(), StatusCode::BAD_REQUEST);

    let (_, v) = call(&app, "GET", "/api/progress", None).await;
    assert_eq!(v["store_lines"], 0, "rejected submissions are not stored");
}

#[tokio::test]
async fn resubmission_and_undo_keep_an_audit_trail() {
    let dir = tempfile::tempdir().unwrap();
    let labels = dir.path().join("labels.jsonl");
    let app = app(&labels);
    let id = pair_id(&next(&app, "a").await);
    label(&app, "a", &id, "duplication").await;
    let (s, v) = call(&app, "POST", "/api/labels/undo", Some(json!({ "pair_id": id, "annotator": "a" }))).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["retracted"], "duplication");
    assert_eq!(pair_id(&next(&app, "a").await), id, "undone pair is served again");
    label(&app, "a", &id, "none").await;

    let (_, v) = call(&app, "GET", &format!("/api/labels?pair_id={id}&annotator=a"), None).await;
    assert_eq!(v["label"], "none");
    let lines = std::fs::read_to_string(&labels).unwrap();
    assert_eq!(lines.lines().count(), 3);

    label(&app, "a", &id, "repayment").await;
    let (_, v) = call(&app, "GET", "/api/progress", None).await;
    assert_eq!(v["annotators"]["a"]["labeled"], 1);
    assert_eq!(v["annotators"]["a"]["repayment"], 1);
    assert_eq!(v["store_lines"], 4);
}

#[tokio::test]
async fn acknowledged_labels_survive_a_restart() {
    let dir = tempfile::tempdir().unwrap();
    let labels = dir.path().join("labels.jsonl");
    let first = {
        let app = app(&labels);
        let id = pair_id(&next(&app, "a").await);
        assert_eq!(label(&app, "a", &id, "repayment").await.0, StatusCode::OK);
        id
    };
    let app = app(&labels);
    let v = next(&app, "a").await;
    assert_ne!(pair_id(&v), first);
    assert_eq!(v["index"], 1);
    let (_, v) = call(&app, "GET", &format!("/api/labels?pair_id={first}&annotator=a"), None).await;
    assert_eq!(v["label"], "repayment");
}

#[tokio::test]
async fn service_start_from_files_and_overlap_flag() {
    let dir = tempfile::tempdir().unwrap();
    let sample = dir.path().join("sample.jsonl");
    assert!(AnnotateService::open(&sample, &dir.path().join("l.jsonl")).is_err());
    write_jsonl(&five_pair_sample(), &sample).unwrap();
    let svc = AnnotateService::open(&sample, &dir.path().join("l.jsonl"))
        .unwrap()
        .with_overlap(0.4, 7)
        .unwrap();
    let app = router(Arc::new(svc));
    let (_, v) = call(&app, "GET", "/api/progress", None).await;
    assert_eq!(v["overlap_size"], 2);
    let mut a_count = 0;
    loop {
        let v = next(&app, "a").await;
        if v["status"] == "exhausted" {
            break;
        }
        label(&app, "a", &pair_id(&v), "none").await;
        a_count += 1;
    }
    assert_eq!(a_count, 5);
    let mut b_count = 0;
    loop {
        let v = next(&app, "b").await;
        if v["status"] == "exhausted" {
            break;
        }
        assert_eq!(v["overlap"], true);
        label(&app, "b", &pair_id(&v), "none").await;
        b_count += 1;
    }
    assert_eq!(b_count, 2);
}

#[tokio::test]
async fn ui_assets() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(&dir.path().join("labels.jsonl"));
    let (s, v) = call(&app, "GET", "/", None).await;
    assert_eq!(s, StatusCode::OK);
    assert!(v.as_str().unwrap().contains("/api/pairs/next"));

    let assets = dir.path().join("ui");
    std::fs::create_dir_all(&assets).unwrap();
    std::fs::write(assets.join("index.html"), "<html>bundle</html>").unwrap();
    std::fs::write(assets.join("app.js"), "console.log(1)").unwrap();
    let svc = AnnotateService::new(five_pair_sample(), LabelStore::open(dir.path().join("l2.jsonl")).unwrap())
        .unwrap()
        .with_assets(&assets);
    let app = router(Arc::new(svc));
    let (s, v) = call(&app, "GET", "/", None).await;
    assert_eq!((s, v.as_str().unwrap()), (StatusCode::OK, "<html>bundle</html>"));
    let resp = app
        .clone()
        .oneshot(Request::get("/assets/app.js").body(Body::empty()).unwrap())
        .await
        .unwrap();
    assert_eq!(resp.headers()["content-type"], "text/javascript");
    let (s, _) = call(&app, "GET", "/assets/missing.css", None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    let (s, _) = call(&app, "GET", "/assets/..%2F..%2Fetc%2Fpasswd", None).await;
    assert!(s == StatusCode::BAD_REQUEST || s == StatusCode::NOT_FOUND);
}
