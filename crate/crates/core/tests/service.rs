//! Review service: HTTP/CLI parity, lease safety and crash durability.

mod common;

use std::collections::BTreeSet;
use std::sync::Arc;
use std::time::{Duration, Instant};

use axum::body::Body;
use axum::http::Request;
use http_body_util::BodyExt;
use tower::ServiceExt;

use common::*;
use srrg::service::{router, AppState, ServiceConfig};
use srrg::store::CorpusStore;
use srrg::taxonomy::Taxonomy;

async fn get(app: &axum::Router, uri: &str) -> (u16, String) {
    let res = app
        .clone()
        .oneshot(Request::get(uri).body(Body::empty()).unwrap())
        .await
        .unwrap();
    let status = res.status().as_u16();
    let bytes = res.into_body().collect().await.unwrap().to_bytes();
    (status, String::from_utf8(bytes.to_vec()).unwrap())
}

#[tokio::test]
async fn http_statistics_match_cli_output() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    let store = Arc::new(reviewed_corpus(&corpus));
    let app = router(AppState::new(store, Taxonomy::bundled(), ServiceConfig::default()));
    let corpus_arg = corpus.to_str().unwrap();

    let (status, http_summary) = get(&app, "/summary").await;
    assert_eq!(status, 200);
    let (code, cli_summary) = srrg(dir.path(), &["stats", "--reviews", corpus_arg]);
    assert_eq!(code, 0);
    assert_eq!(canonical_json(&http_summary), canonical_json(&cli_summary));

    for id in ["s000", "s001", "s003"] {
        let (status, http_diff) = get(&app, &format!("/studies/{id}/diff")).await;
        assert_eq!(status, 200);
        let (code, cli_diff) = srrg(dir.path(), &["diff", "--corpus", corpus_arg, "--study", id]);
        assert_eq!(code, 0);
        assert_eq!(canonical_json(&http_diff), canonical_json(&cli_diff), "{id}");
    }
    let (status, _) = get(&app, "/studies/s002/diff").await;
    assert_eq!(status, 404);
    let (code, _) = srrg(dir.path(), &["diff", "--corpus", corpus_arg, "--study", "s002"]);
    assert_eq!(code, 2);

    let summary: serde_json::Value = serde_json::from_str(&http_summary).unwrap();
    assert_eq!(summary["review"]["total"], 3);
    assert_eq!(summary["review"]["changed"], 2);
    // Three stored utterances in each of the three reviewed studies.
    assert_eq!(summary["label_consistency"]["n"], 9);
    assert_eq!(summary["label_consistency"]["exact_matches"], 8);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_polls_never_share_a_lease() {
    let dir = tempfile::tempdir().unwrap();
    let store = CorpusStore::open(dir.path()).unwrap();
    store.upsert_studies(&fixture_studies(12)).unwrap();
    let app = router(AppState::new(Arc::new(store), Taxonomy::bundled(), ServiceConfig::default()));
    let mut handles = Vec::new();
    for r in 0..16 {
        let app = app.clone();
        handles.push(tokio::spawn(async move {
            let (status, body) = get(&app, &format!("/tasks/next?reviewer=r{r}")).await;
            (status, body)
        }));
    }
    let mut leased = Vec::new();
    let mut exhausted = 0;
    for h in handles {
        let (status, body) = h.await.unwrap();
        match status {
            200 => {
                let task: serde_json::Value = serde_json::from_str(&body).unwrap();
                leased.push(task["study_id"].as_str().unwrap().to_string());
            }
            404 => exhausted += 1,
            other => panic!("unexpected status {other}"),
        }
    }
    let distinct: BTreeSet<&String> = leased.iter().collect();
    assert_eq!(distinct.len(), leased.len());
    assert_eq!(leased.len(), 12);
    assert_eq!(exhausted, 4);
}

#[test]
fn serve_on_occupied_port_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    CorpusStore::open(dir.path()).unwrap();
    let taken = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = taken.local_addr().unwrap().to_string();
    let (code, _) = srrg(dir.path(), &["serve", "--corpus", dir.path().to_str().unwrap(), "--addr", &addr]);
    assert_eq!(code, 2);
}

/// Ten kill-and-restart cycles with a concurrent writer.
#[test]
fn killed_server_loses_no_acknowledged_review() {
    let started = Instant::now();
    let acked = crash_loop(10, 11).unwrap();
    assert!(acked > 0);
    assert!(started.elapsed() < Duration::from_secs(60), "took {:?}", started.elapsed());
}
