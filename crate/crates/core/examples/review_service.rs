//! Runs the review service in-process: lease a task, submit an edit, then
//! read the diff and the summary.

use std::sync::Arc;

use axum::body::Body;
use axum::http::Request;
use http_body_util::BodyExt;
use tower::ServiceExt;

use srrg::service::{router, AppState, ServiceConfig};
use srrg::store::{CorpusStore, Split, Study};
use srrg::taxonomy::Taxonomy;

async fn call(app: &axum::Router, request: Request<Body>) -> (u16, serde_json::Value) {
    let response = app.clone().oneshot(request).await.expect("infallible router");
    let status = response.status().as_u16();
    let bytes = response.into_body().collect().await.expect("body").to_bytes();
    (status, serde_json::from_slice(&bytes).unwrap_or(serde_json::Value::Null))
}

#[tokio::main]
async fn main() {
    let dir = tempfile::tempdir().expect("temp dir");
    let store = CorpusStore::open(dir.path()).expect("open store");
    store
        .upsert_studies(&[Study {
            study_id: "s1".into(),
            source: "demo".into(),
            original_text: "Small right effusion.".into(),
            structured_text: Some("Findings:\nPleura:\n- Small right pleural effusion.\nImpression:\n1. Small right pleural effusion.".into()),
            split: Some(Split::TestReviewed),
        }])
        .expect("upsert");
    let app = router(AppState::new(Arc::new(store), Taxonomy::bundled(), ServiceConfig::default()));

    let (status, task) = call(&app, Request::get("/tasks/next?reviewer=r1").body(Body::empty()).unwrap()).await;
    println!("GET /tasks/next -> {status}: {} at v{}", task["study_id"], task["version"]);

    let edited = task["structured_text"].as_str().unwrap().replace("Small", "Moderate");
    let body = serde_json::json!({"edited_text": edited, "expected_version": task["version"], "reviewer": "r1"});
    let request = Request::post("/studies/s1/review")
        .header("content-type", "application/json")
        .body(Body::from(body.to_string()))
        .unwrap();
    let (status, accepted) = call(&app, request).await;
    println!("POST /studies/s1/review -> {status}: {accepted}");

    let (_, diff) = call(&app, Request::get("/studies/s1/diff").body(Body::empty()).unwrap()).await;
    println!("GET /studies/s1/diff -> {diff}");
    let (_, summary) = call(&app, Request::get("/summary").body(Body::empty()).unwrap()).await;
    println!("GET /summary -> {summary}");
}
