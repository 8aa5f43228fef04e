//! HTTP API for the review workflow.
//!
//! | method | path | |
//! |---|---|---|
//! | GET | `/healthz` | liveness |
//! | GET | `/tasks/next?reviewer=<id>` | next unreviewed study, leased to the caller |
//! | GET | `/studies/{id}` | study payload |
//! | POST | `/studies/{id}/review` | submit an edit (optimistic versioning) |
//! | GET | `/studies/{id}/diff` | diff statistics of the latest review |
//! | GET | `/summary` | aggregate review statistics |
//! | GET | `/taxonomy` | the disease tree, verbatim |
//! | POST | `/parse` | lenient parse + validation of a draft |
//!
//! Every response is JSON and carries `X-SRRG-Api: 1`. When a token file
//! is configured every route except `/healthz` needs `Authorization: Bearer
//! <token>`, and the token decides the reviewer identity.

use std::collections::HashMap;
use std::future::Future;
use std::path::Path;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, HeaderMap, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};

use crate::report::{parse_report, render_report, ParseIssue, ParseMode, StructuredReport};
use crate::store::{CorpusStore, LabelCorrection, ReviewDraft, Split, StoreError};
use crate::taxonomy::{LabelSet, Taxonomy};
use crate::textdiff::{diff_stats, label_consistency, DiffStats, LabelConsistency, ReviewSummary};
use crate::utterance::{extract_utterances, Origin};
use crate::validate::{validate_desiderata, ValidationConfig, Violation};

pub const API_VERSION_HEADER: &str = "x-srrg-api";

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub lease: Duration,
    /// Studies dispensed as tasks; `None` dispenses every study.
    pub task_split: Option<Split>,
    /// Distinct reviewers wanted per study.
    pub reviews_per_study: usize,
    /// Token to reviewer id. Empty disables authentication.
    pub tokens: HashMap<String, String>,
    /// Compare statuses too when computing label consistency.
    pub consistency_with_status: bool,
    pub validation: ValidationConfig,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            lease: Duration::from_secs(30 * 60),
            task_split: Some(Split::TestReviewed),
            reviews_per_study: 1,
            tokens: HashMap::new(),
            consistency_with_status: true,
            validation: ValidationConfig::default(),
        }
    }
}

/// Reads a token file: one `<reviewer> <token>` pair per line; blank lines
/// and `#` comments are skipped.
pub fn load_tokens(path: &Path) -> std::io::Result<HashMap<String, String>> {
    let text = std::fs::read_to_string(path)?;
    let mut out = HashMap::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split_whitespace();
        match (parts.next(), parts.next(), parts.next()) {
            (Some(reviewer), Some(token), None) => {
                out.insert(token.to_string(), reviewer.to_string());
            }
            _ => {
                return Err(std::io::Error::new(
                    std::io::ErrorKind::InvalidData,
                    format!("{}:{}: expected '<reviewer> <token>'", path.display(), idx + 1),
                ))
            }
        }
    }
    Ok(out)
}

/// JSON error body: `{"code", "message"}`.
#[derive(Debug, Clone, Serialize)]
pub struct ApiError {
    #[serde(skip)]
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub issues: Vec<ParseIssue>,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            code,
            message: message.into(),
            issues: Vec::new(),
        }
    }

    fn not_found(message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::NOT_FOUND, "not_found", message)
    }
}

impl From<StoreError> for ApiError {
    fn from(err: StoreError) -> Self {
        let message = err.to_string();
        match err {
            StoreError::UnknownStudy(_) => ApiError::not_found(message),
            StoreError::VersionConflict { .. } => {
                ApiError::new(StatusCode::CONFLICT, "version_conflict", message)
            }
            StoreError::UnparsableEdit(issues) => ApiError {
                issues,
                ..ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "unparsable_edit", message)
            },
            _ => ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(&self)).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

struct Lease {
    reviewer: String,
    expires: Instant,
    expires_at: String,
}

pub struct AppState {
    store: Arc<CorpusStore>,
    taxonomy: Taxonomy,
    config: ServiceConfig,
    leases: Mutex<HashMap<String, Lease>>,
}

impl AppState {
    pub fn new(store: Arc<CorpusStore>, taxonomy: Taxonomy, config: ServiceConfig) -> Arc<Self> {
        Arc::new(AppState {
            store,
            taxonomy,
            config,
            leases: Mutex::new(HashMap::new()),
        })
    }

    fn reviewer(&self, headers: &HeaderMap, claimed: Option<&str>) -> Result<String, ApiError> {
        if self.config.tokens.is_empty() {
            return claimed
                .filter(|r| !r.trim().is_empty())
                .map(str::to_string)
                .ok_or_else(|| {
                    ApiError::new(StatusCode::BAD_REQUEST, "missing_reviewer", "reviewer is required")
                });
        }
        let unauthorized = || ApiError::new(StatusCode::UNAUTHORIZED, "unauthorized", "missing or unknown token");
        let token = headers
            .get(header::AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "))
            .ok_or_else(unauthorized)?;
        let reviewer = self.config.tokens.get(token.trim()).ok_or_else(unauthorized)?;
        if claimed.is_some_and(|c| c != reviewer) {
            return Err(ApiError::new(
                StatusCode::UNAUTHORIZED,
                "unauthorized",
                "token does not belong to the named reviewer",
            ));
        }
        Ok(reviewer.clone())
    }

    fn check_token(&self, headers: &HeaderMap) -> Result<(), ApiError> {
        if self.config.tokens.is_empty() {
            return Ok(());
        }
        self.reviewer(headers, None).map(|_| ())
    }
}

/// Pre-filled utterance row of a task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskUtterance {
    pub origin: Origin,
    pub text: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub labels: Option<LabelSet>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewTask {
    pub study_id: String,
    pub original_text: String,
    pub structured_text: String,
    pub utterances: Vec<TaskUtterance>,
    pub version: u64,
    pub lease_expires_at: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReviewSubmission {
    pub edited_text: String,
    #[serde(default)]
    pub label_corrections: Vec<LabelCorrection>,
    pub expected_version: u64,
    #[serde(default)]
    pub reviewer: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewAccepted {
    pub version: u64,
    pub diff: DiffStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryPayload {
    pub review: ReviewSummary,
    pub label_consistency: Option<LabelConsistency>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ParsePayload {
    pub ok: bool,
    pub report: Option<StructuredReport>,
    pub issues: Vec<ParseIssue>,
    pub violations: Vec<Violation>,
}

fn structured_text(store: &CorpusStore, study_id: &str) -> Option<(String, String)> {
    let study = store.study(study_id)?;
    Some((study.original_text, study.structured_text.unwrap_or_default()))
}

/// Diff statistics of a study's structured text against its latest review.
/// `None` when the study is unknown or unreviewed.
pub fn study_diff(store: &CorpusStore, study_id: &str) -> Option<DiffStats> {
    let (_, structured) = structured_text(store, study_id)?;
    let review = store.latest_review(study_id)?;
    Some(diff_stats(&structured, &review.edited_text))
}

/// Per-study diff statistics of every reviewed study, by study id.
pub fn all_study_diffs(store: &CorpusStore) -> Vec<(String, DiffStats)> {
    store
        .latest_reviews()
        .into_iter()
        .filter_map(|r| study_diff(store, &r.study_id).map(|d| (r.study_id, d)))
        .collect()
}

/// Aggregate statistics over the latest review of every study. Label
/// consistency pairs each stored utterance label set with the reviewer's
/// correction, or with itself when the reviewer left it alone. `None` when
/// nothing has been reviewed.
pub fn review_statistics(store: &CorpusStore, with_status: bool) -> Option<SummaryPayload> {
    let diffs: Vec<DiffStats> = all_study_diffs(store).into_iter().map(|(_, d)| d).collect();
    let review = ReviewSummary::from_stats(&diffs).ok()?;
    let mut pairs: Vec<(LabelSet, LabelSet)> = Vec::new();
    for record in store.latest_reviews() {
        let corrections: HashMap<Origin, &LabelSet> = record
            .label_corrections
            .iter()
            .map(|c| (c.origin, &c.labels))
            .collect();
        for utt in store.utterances_of(&record.study_id) {
            if let Some(auto) = utt.labels {
                let reviewed = corrections.get(&utt.origin).map_or_else(|| auto.clone(), |l| (*l).clone());
                pairs.push((auto, reviewed));
            }
        }
    }
    Some(SummaryPayload {
        review,
        label_consistency: label_consistency(&pairs, with_status).ok(),
    })
}

async fn healthz() -> Json<serde_json::Value> {
    Json(serde_json::json!({"status": "ok"}))
}

#[derive(Deserialize)]
struct NextQuery {
    reviewer: Option<String>,
}

async fn next_task(
    State(app): State<Arc<AppState>>,
    headers: HeaderMap,
    Query(query): Query<NextQuery>,
) -> ApiResult<ReviewTask> {
    let reviewer = app.reviewer(&headers, query.reviewer.as_deref())?;
    let candidates = match app.config.task_split {
        Some(split) => app.store.studies_in(split),
        None => app.store.studies(),
    };
    let now = Instant::now();
    let mut leases = app.leases.lock().expect("lease lock");
    leases.retain(|_, lease| lease.expires > now);
    let study = candidates.into_iter().find(|study| {
        let history = app.store.review_history(&study.study_id);
        let reviewers: std::collections::BTreeSet<&str> =
            history.iter().map(|r| r.reviewer.as_str()).collect();
        if reviewers.contains(reviewer.as_str()) || reviewers.len() >= app.config.reviews_per_study {
            return false;
        }
        leases
            .get(&study.study_id)
            .is_none_or(|lease| lease.reviewer == reviewer)
    });
    let study = study.ok_or_else(|| ApiError::not_found("no unreviewed study left"))?;
    let expires_at = chrono::Utc::now()
        + chrono::Duration::from_std(app.config.lease).unwrap_or(chrono::Duration::MAX);
    let lease = Lease {
        reviewer: reviewer.clone(),
        expires: now + app.config.lease,
        expires_at: expires_at.to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
    };
    let lease_expires_at = lease.expires_at.clone();
    leases.insert(study.study_id.clone(), lease);
    drop(leases);

    let stored: HashMap<Origin, Option<LabelSet>> = app
        .store
        .utterances_of(&study.study_id)
        .into_iter()
        .map(|u| (u.origin, u.labels))
        .collect();
    let structured = study.structured();
    let utterances = structured
        .as_ref()
        .map(|r| extract_utterances(&study.study_id, r))
        .unwrap_or_default()
        .into_iter()
        .map(|u| TaskUtterance {
            labels: stored.get(&u.origin).cloned().flatten(),
            origin: u.origin,
            text: u.text,
        })
        .collect();
    Ok(Json(ReviewTask {
        version: app.store.current_version(&study.study_id),
        structured_text: structured
            .as_ref()
            .map(render_report)
            .or(study.structured_text)
            .unwrap_or_default(),
        study_id: study.study_id,
        original_text: study.original_text,
        utterances,
        lease_expires_at,
    }))
}

#[derive(Serialize)]
struct StudyPayload {
    study_id: String,
    source: String,
    original_text: String,
    structured_text: Option<String>,
    split: Option<Split>,
    version: u64,
    latest_review: Option<crate::store::ReviewRecord>,
}

async fn get_study(
    State(app): State<Arc<AppState>>,
    headers: HeaderMap,
    UrlPath(id): UrlPath<String>,
) -> ApiResult<StudyPayload> {
    app.check_token(&headers)?;
    let study = app
        .store
        .study(&id)
        .ok_or_else(|| ApiError::not_found(format!("unknown study {id:?}")))?;
    Ok(Json(StudyPayload {
        version: app.store.current_version(&id),
        latest_review: app.store.latest_review(&id),
        study_id: study.study_id,
        source: study.source,
        original_text: study.original_text,
        structured_text: study.structured_text,
        split: study.split,
    }))
}

async fn submit_review(
    State(app): State<Arc<AppState>>,
    headers: HeaderMap,
    UrlPath(id): UrlPath<String>,
    Json(body): Json<ReviewSubmission>,
) -> ApiResult<ReviewAccepted> {
    let reviewer = app.reviewer(&headers, body.reviewer.as_deref())?;
    for correction in &body.label_corrections {
        app.taxonomy.check_labels(&correction.labels).map_err(|e| {
            ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_labels", e.to_string())
        })?;
    }
    let draft = ReviewDraft {
        study_id: id.clone(),
        reviewer,
        edited_text: body.edited_text,
        label_corrections: body.label_corrections,
    };
    let store = app.store.clone();
    let expected = body.expected_version;
    // The store fsyncs before returning; keep that off the async workers.
    let record = tokio::task::spawn_blocking(move || store.save_review(draft, expected))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))??;
    app.leases.lock().expect("lease lock").remove(&id);
    let diff = study_diff(&app.store, &id).expect("study was just reviewed");
    Ok(Json(ReviewAccepted {
        version: record.version,
        diff,
    }))
}

async fn get_diff(
    State(app): State<Arc<AppState>>,
    headers: HeaderMap,
    UrlPath(id): UrlPath<String>,
) -> ApiResult<DiffStats> {
    app.check_token(&headers)?;
    study_diff(&app.store, &id)
        .map(Json)
        .ok_or_else(|| ApiError::not_found(format!("study {id:?} is unknown or unreviewed")))
}

async fn get_summary(State(app): State<Arc<AppState>>, headers: HeaderMap) -> ApiResult<SummaryPayload> {
    app.check_token(&headers)?;
    review_statistics(&app.store, app.config.consistency_with_status)
        .map(Json)
        .ok_or_else(|| ApiError::not_found("no reviews yet"))
}

async fn get_taxonomy(State(app): State<Arc<AppState>>, headers: HeaderMap) -> Result<Response, ApiError> {
    app.check_token(&headers)?;
    Ok((
        [(header::CONTENT_TYPE, HeaderValue::from_static("application/json"))],
        app.taxonomy.source_json().to_string(),
    )
        .into_response())
}

#[derive(Deserialize)]
struct ParseRequest {
    text: String,
}

async fn post_parse(
    State(app): State<Arc<AppState>>,
    headers: HeaderMap,
    Json(body): Json<ParseRequest>,
) -> ApiResult<ParsePayload> {
    app.check_token(&headers)?;
    Ok(Json(match parse_report(&body.text, ParseMode::Lenient) {
        Ok(parsed) => {
            let violations = validate_desiderata(&parsed.report, &app.config.validation);
            ParsePayload {
                ok: parsed.issues.is_empty() && violations.is_empty(),
                report: Some(parsed.report),
                issues: parsed.issues,
                violations,
            }
        }
        Err(issues) => ParsePayload {
            ok: false,
            report: None,
            issues,
            violations: Vec::new(),
        },
    }))
}

async fn api_header(
    req: axum::extract::Request,
    next: axum::middleware::Next,
) -> Response {
    let mut res = next.run(req).await;
    res.headers_mut()
        .insert(API_VERSION_HEADER, HeaderValue::from_static("1"));
    res
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/healthz", get(healthz))
        .route("/tasks/next", get(next_task))
        .route("/studies/{id}", get(get_study))
        .route("/studies/{id}/review", post(submit_review))
        .route("/studies/{id}/diff", get(get_diff))
        .route("/summary", get(get_summary))
        .route("/taxonomy", get(get_taxonomy))
        .route("/parse", post(post_parse))
        .layer(axum::middleware::from_fn(api_header))
        .with_state(state)
}

/// Serves until `shutdown` resolves. Reviews are durable once acknowledged,
/// so shutdown has nothing to flush.
pub async fn serve(
    listener: tokio::net::TcpListener,
    state: Arc<AppState>,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(state))
        .with_graceful_shutdown(shutdown)
        .await
}
