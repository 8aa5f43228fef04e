//! LLM-backed labeling and restructuring.
//!
//! No network client ships with the crate. [`LlmClient`] is implemented by
//! [`ReplayClient`] (recorded sessions, deterministic), [`RecordingClient`]
//! (wraps another client and captures its exchanges) and [`FnClient`]
//! (closure adapter, which is where a real provider call plugs in).

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::prompts::{build_disease_prompt, build_structuring_prompt, parse_disease_response};
use super::{consensus, Labeler, LabelingError};
use crate::report::{parse_report, ParseIssue, ParseMode, StructuredReport};
use crate::taxonomy::{LabelSet, Taxonomy};
use crate::utterance::Utterance;
use crate::validate::{validate_desiderata, ValidationConfig, Violation};

#[derive(Debug, thiserror::Error)]
pub enum LlmError {
    #[error("no recorded response for voter {voter}, prompt {hash}")]
    NoRecording { voter: usize, hash: String },
    #[error("recording line {line}: {message}")]
    BadRecording { line: usize, message: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("completion failed: {0}")]
    Completion(String),
}

/// Text completion endpoint. Implementations may be called from several
/// worker threads at once.
pub trait LlmClient: Send + Sync {
    fn complete(&self, prompt: &str) -> Result<String, LlmError>;

    fn model(&self) -> &str;
}

impl<C: LlmClient + ?Sized> LlmClient for Arc<C> {
    fn complete(&self, prompt: &str) -> Result<String, LlmError> {
        (**self).complete(prompt)
    }

    fn model(&self) -> &str {
        (**self).model()
    }
}

/// Provider settings, as read from the `[llm]` table of the config file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LlmConfig {
    #[serde(default)]
    pub endpoint: Option<String>,
    pub model: String,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
    /// JSON-lines session used for replay.
    #[serde(default)]
    pub recording: Option<PathBuf>,
}

fn default_timeout() -> u64 {
    60
}

/// Hex SHA-256 of the prompt text; the replay key.
pub fn prompt_hash(prompt: &str) -> String {
    hex::encode(Sha256::digest(prompt.as_bytes()))
}

/// One line of a recorded session file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordedExchange {
    pub prompt_hash: String,
    /// Voter index for multi-voter sessions; 0 when absent.
    #[serde(default, skip_serializing_if = "is_zero")]
    pub voter: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    pub response: String,
}

fn is_zero(v: &usize) -> bool {
    *v == 0
}

/// Serves responses from a recorded session, keyed by voter and prompt hash.
#[derive(Debug, Clone)]
pub struct ReplayClient {
    responses: Arc<HashMap<(usize, String), String>>,
    model: String,
    voter: usize,
}

impl ReplayClient {
    pub fn from_exchanges(exchanges: impl IntoIterator<Item = RecordedExchange>) -> ReplayClient {
        let mut model = None;
        let responses = exchanges
            .into_iter()
            .map(|ex| {
                if model.is_none() {
                    model = ex.model.clone();
                }
                ((ex.voter, ex.prompt_hash), ex.response)
            })
            .collect();
        ReplayClient {
            responses: Arc::new(responses),
            model: model.unwrap_or_else(|| "replay".to_string()),
            voter: 0,
        }
    }

    pub fn from_jsonl(text: &str) -> Result<ReplayClient, LlmError> {
        let mut exchanges = Vec::new();
        for (idx, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let ex: RecordedExchange =
                serde_json::from_str(line).map_err(|e| LlmError::BadRecording {
                    line: idx + 1,
                    message: e.to_string(),
                })?;
            exchanges.push(ex);
        }
        Ok(ReplayClient::from_exchanges(exchanges))
    }

    pub fn load(path: &Path) -> Result<ReplayClient, LlmError> {
        let text = fs::read_to_string(path).map_err(|source| LlmError::Io {
            path: path.display().to_string(),
            source,
        })?;
        ReplayClient::from_jsonl(&text)
    }

    /// A view of the same session answering as voter `voter`.
    pub fn voter(&self, voter: usize) -> ReplayClient {
        ReplayClient {
            voter,
            ..self.clone()
        }
    }
}

impl LlmClient for ReplayClient {
    fn complete(&self, prompt: &str) -> Result<String, LlmError> {
        let hash = prompt_hash(prompt);
        self.responses
            .get(&(self.voter, hash.clone()))
            .cloned()
            .ok_or(LlmError::NoRecording {
                voter: self.voter,
                hash,
            })
    }

    fn model(&self) -> &str {
        &self.model
    }
}

/// Passes calls through to `inner` and keeps every exchange for later
/// replay.
pub struct RecordingClient<C> {
    inner: C,
    voter: usize,
    log: Mutex<Vec<RecordedExchange>>,
}

impl<C: LlmClient> RecordingClient<C> {
    pub fn new(inner: C, voter: usize) -> Self {
        RecordingClient {
            inner,
            voter,
            log: Mutex::new(Vec::new()),
        }
    }

    pub fn exchanges(&self) -> Vec<RecordedExchange> {
        self.log.lock().expect("recording lock").clone()
    }

    /// Appends the captured exchanges to a JSON-lines session file.
    pub fn append_to(&self, path: &Path) -> Result<(), LlmError> {
        let io = |source| LlmError::Io {
            path: path.display().to_string(),
            source,
        };
        let mut file = fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(io)?;
        for ex in self.exchanges() {
            let line = serde_json::to_string(&ex).expect("exchange serializes");
            writeln!(file, "{line}").map_err(io)?;
        }
        file.sync_all().map_err(io)
    }
}

impl<C: LlmClient> LlmClient for RecordingClient<C> {
    fn complete(&self, prompt: &str) -> Result<String, LlmError> {
        let response = self.inner.complete(prompt)?;
        self.log
            .lock()
            .expect("recording lock")
            .push(RecordedExchange {
                prompt_hash: prompt_hash(prompt),
                voter: self.voter,
                model: Some(self.inner.model().to_string()),
                response: response.clone(),
            });
        Ok(response)
    }

    fn model(&self) -> &str {
        self.inner.model()
    }
}

type CompleteFn = dyn Fn(&str) -> Result<String, LlmError> + Send + Sync;

/// Adapts a closure into an [`LlmClient`].
pub struct FnClient {
    model: String,
    f: Box<CompleteFn>,
}

impl FnClient {
    pub fn new(
        model: impl Into<String>,
        f: impl Fn(&str) -> Result<String, LlmError> + Send + Sync + 'static,
    ) -> Self {
        FnClient {
            model: model.into(),
            f: Box::new(f),
        }
    }
}

impl LlmClient for FnClient {
    fn complete(&self, prompt: &str) -> Result<String, LlmError> {
        (self.f)(prompt)
    }

    fn model(&self) -> &str {
        &self.model
    }
}

/// Labels utterances with the disease prompt. With three voters each
/// utterance is labeled by 2-of-3 [`consensus`]; with one voter its answer
/// is used as is.
pub struct LlmLabeler {
    voters: Vec<Arc<dyn LlmClient>>,
    taxonomy: Taxonomy,
}

impl LlmLabeler {
    pub fn new(voters: Vec<Arc<dyn LlmClient>>, taxonomy: Taxonomy) -> Result<Self, LabelingError> {
        if voters.len() != 1 && voters.len() != 3 {
            return Err(LabelingError::WrongVoterCount(voters.len()));
        }
        Ok(LlmLabeler { voters, taxonomy })
    }

    fn ask(&self, voter: &dyn LlmClient, utterances: &[Utterance]) -> Result<Vec<LabelSet>, LabelingError> {
        let texts: Vec<&str> = utterances.iter().map(|u| u.text.as_str()).collect();
        let prompt = build_disease_prompt(&texts, &self.taxonomy)?;
        let response = voter.complete(&prompt)?;
        let parsed = parse_disease_response(&response, utterances, &self.taxonomy)?;
        for idx in parsed.echo_mismatches {
            log::warn!(
                "{}: echoed finding does not match {}",
                voter.model(),
                utterances[idx].key()
            );
        }
        Ok(parsed.labels)
    }
}

impl Labeler for LlmLabeler {
    fn label(&self, utterances: &[Utterance]) -> Result<Vec<LabelSet>, LabelingError> {
        if utterances.is_empty() {
            return Ok(Vec::new());
        }
        let votes: Vec<Vec<LabelSet>> = self
            .voters
            .iter()
            .map(|v| self.ask(v.as_ref(), utterances))
            .collect::<Result<_, _>>()?;
        if votes.len() == 1 {
            return Ok(votes.into_iter().next().expect("one voter"));
        }
        (0..utterances.len())
            .map(|i| consensus(&[votes[0][i].clone(), votes[1][i].clone(), votes[2][i].clone()]))
            .collect()
    }
}

/// Result of [`restructure`].
#[derive(Debug, Clone)]
pub struct RestructureOutcome {
    /// `None` when the final response held nothing parseable.
    pub report: Option<StructuredReport>,
    pub response: String,
    /// Lenient-parse issues of the final response.
    pub issues: Vec<ParseIssue>,
    pub violations: Vec<Violation>,
    /// 1, or 2 when the first answer needed a retry.
    pub attempts: u32,
}

impl RestructureOutcome {
    pub fn is_clean(&self) -> bool {
        self.report.is_some() && self.issues.is_empty() && self.violations.is_empty()
    }
}

fn strip_code_fence(response: &str) -> &str {
    let trimmed = response.trim();
    let Some(inner) = trimmed.strip_prefix("```") else {
        return trimmed;
    };
    let inner = inner.split_once('\n').map_or("", |(_, rest)| rest);
    inner.strip_suffix("```").unwrap_or(inner).trim()
}

fn evaluate(response: String, attempts: u32, config: &ValidationConfig) -> RestructureOutcome {
    match parse_report(strip_code_fence(&response), ParseMode::Lenient) {
        Ok(parsed) => RestructureOutcome {
            violations: validate_desiderata(&parsed.report, config),
            report: Some(parsed.report),
            issues: parsed.issues,
            response,
            attempts,
        },
        Err(issues) => RestructureOutcome {
            report: None,
            issues,
            violations: Vec::new(),
            response,
            attempts,
        },
    }
}

/// Asks `client` to rewrite a free-text report in the structured format,
/// then lenient-parses and validates the answer. If anything was flagged,
/// the prompt is sent once more with the problems appended.
pub fn restructure(
    free_text_report: &str,
    client: &dyn LlmClient,
    config: &ValidationConfig,
) -> Result<RestructureOutcome, LabelingError> {
    let prompt = build_structuring_prompt(free_text_report)?;
    let first = evaluate(client.complete(&prompt)?, 1, config);
    if first.is_clean() {
        return Ok(first);
    }
    let mut problems: Vec<String> = first.issues.iter().map(|i| i.to_string()).collect();
    problems.extend(first.violations.iter().map(|v| v.message.clone()));
    let retry = format!(
        "{prompt}\n\nA previous answer had these problems; avoid them:\n{}",
        problems
            .iter()
            .map(|p| format!("- {p}"))
            .collect::<Vec<_>>()
            .join("\n")
    );
    Ok(evaluate(client.complete(&retry)?, 2, config))
}
