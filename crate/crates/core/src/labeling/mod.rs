//! Utterance labelers and the consensus labeling pipeline.
//!
//! A [`Labeler`] maps a batch of utterances to one [`LabelSet`] per utterance,
//! positionally aligned. Implementations in this module:
//!
//! - [`KeywordLabeler`]: lexicon + negation/hedge cues. A deterministic test
//!   oracle and desk-scale stand-in, not a clinical tool.
//! - [`PredictionLabeler`]: replays labels produced elsewhere (e.g. by a
//!   trained utterance classifier) from a JSON-lines prediction file.
//! - [`LlmLabeler`]: prompts one or three [`LlmClient`]s with the disease
//!   prompt; three voters are reduced with [`consensus`].

mod keyword;
mod llm;
mod predictions;
mod prompts;

use std::thread;

pub use keyword::{KeywordLabeler, LexiconEntry};
pub use llm::{
    prompt_hash, restructure, FnClient, LlmClient, LlmConfig, LlmError, LlmLabeler,
    RecordedExchange, RecordingClient, ReplayClient, RestructureOutcome,
};
pub use predictions::{write_predictions, PredictionLabeler, PredictionRow};
pub use prompts::{
    build_disease_prompt, build_structuring_prompt, parse_disease_response, render_disease_answer,
    DiseaseResponse,
};

use crate::taxonomy::{LabelSet, Status, Taxonomy, TaxonomyError};
use crate::utterance::{Utterance, UtteranceKey};

#[derive(Debug, thiserror::Error)]
pub enum LabelingError {
    #[error("input is empty")]
    EmptyInput,
    #[error("utterance {index} contains a line break")]
    NewlineInUtterance { index: usize },
    #[error("response line {line} has no '=>' separator")]
    LineWithoutArrow { line: usize },
    #[error("response line {line}: unknown disease {name:?}")]
    UnknownDisease { line: usize, name: String },
    #[error("response line {line}: unknown status {status:?}")]
    UnknownStatus { line: usize, status: String },
    #[error("response has {found} finding lines, expected {expected}")]
    CountMismatch { expected: usize, found: usize },
    #[error("consensus needs exactly 3 voters, got {0}")]
    WrongVoterCount(usize),
    #[error("keyword lexicon is empty")]
    EmptyLexicon,
    #[error("invalid lexicon entry {phrase:?}: {message}")]
    InvalidLexicon { phrase: String, message: String },
    #[error("no stored labels for utterance {0}")]
    UnknownUtterance(UtteranceKey),
    #[error("prediction file line {line}: {message}")]
    SchemaViolation { line: usize, message: String },
    #[error("labeler returned {found} label sets for {expected} utterances")]
    WrongOutputLength { expected: usize, found: usize },
    #[error("labeling {key} failed: {source}")]
    LabelerFailure {
        key: UtteranceKey,
        #[source]
        source: Box<LabelingError>,
    },
    #[error(transparent)]
    Taxonomy(#[from] TaxonomyError),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Assigns label sets to utterances.
///
/// The output has exactly one entry per input utterance, in input order.
/// Implementations are shared read-only across worker threads.
pub trait Labeler: Send + Sync {
    fn label(&self, utterances: &[Utterance]) -> Result<Vec<LabelSet>, LabelingError>;
}

impl<L: Labeler + ?Sized> Labeler for &L {
    fn label(&self, utterances: &[Utterance]) -> Result<Vec<LabelSet>, LabelingError> {
        (**self).label(utterances)
    }
}

impl<L: Labeler + ?Sized> Labeler for Box<L> {
    fn label(&self, utterances: &[Utterance]) -> Result<Vec<LabelSet>, LabelingError> {
        (**self).label(utterances)
    }
}

impl<L: Labeler + ?Sized> Labeler for std::sync::Arc<L> {
    fn label(&self, utterances: &[Utterance]) -> Result<Vec<LabelSet>, LabelingError> {
        (**self).label(utterances)
    }
}

/// Labels `utterances` in chunks of `chunk_size` on at most `workers`
/// threads. The result order matches the input regardless of scheduling.
/// Output length and taxonomy membership are checked.
pub fn label_batched(
    labeler: &dyn Labeler,
    utterances: &[Utterance],
    taxonomy: &Taxonomy,
    workers: usize,
    chunk_size: usize,
) -> Result<Vec<LabelSet>, LabelingError> {
    if utterances.is_empty() {
        return Ok(Vec::new());
    }
    let chunks: Vec<&[Utterance]> = utterances.chunks(chunk_size.max(1)).collect();
    Ok(label_chunks(labeler, &chunks, taxonomy, workers)?
        .into_iter()
        .flatten()
        .collect())
}

/// Labels each group with a single labeler call (one prompt per study for
/// LLM labelers) on at most `workers` threads. Output order matches input.
pub fn label_grouped(
    labeler: &dyn Labeler,
    groups: &[Vec<Utterance>],
    taxonomy: &Taxonomy,
    workers: usize,
) -> Result<Vec<Vec<LabelSet>>, LabelingError> {
    let chunks: Vec<&[Utterance]> = groups.iter().map(Vec::as_slice).collect();
    label_chunks(labeler, &chunks, taxonomy, workers)
}

fn label_chunks(
    labeler: &dyn Labeler,
    chunks: &[&[Utterance]],
    taxonomy: &Taxonomy,
    workers: usize,
) -> Result<Vec<Vec<LabelSet>>, LabelingError> {
    if chunks.is_empty() {
        return Ok(Vec::new());
    }
    let workers = workers.clamp(1, chunks.len());
    let per_worker = chunks.len().div_ceil(workers);

    let results: Vec<Result<Vec<Vec<LabelSet>>, LabelingError>> = thread::scope(|scope| {
        let handles: Vec<_> = chunks
            .chunks(per_worker)
            .map(|group| {
                scope.spawn(move || {
                    group
                        .iter()
                        .map(|chunk| {
                            if chunk.is_empty() {
                                Ok(Vec::new())
                            } else {
                                label_checked(labeler, chunk, taxonomy)
                            }
                        })
                        .collect()
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("labeler thread panicked"))
            .collect()
    });

    let mut out = Vec::with_capacity(chunks.len());
    for part in results {
        out.extend(part?);
    }
    Ok(out)
}

/// Runs `labeler` once and enforces the [`Labeler`] contract.
pub fn label_checked(
    labeler: &dyn Labeler,
    utterances: &[Utterance],
    taxonomy: &Taxonomy,
) -> Result<Vec<LabelSet>, LabelingError> {
    let sets = labeler.label(utterances).map_err(|err| match err {
        LabelingError::LabelerFailure { .. } => err,
        other if utterances.len() == 1 => LabelingError::LabelerFailure {
            key: utterances[0].key(),
            source: Box::new(other),
        },
        other => other,
    })?;
    if sets.len() != utterances.len() {
        return Err(LabelingError::WrongOutputLength {
            expected: utterances.len(),
            found: sets.len(),
        });
    }
    for (utt, set) in utterances.iter().zip(&sets) {
        taxonomy
            .check_labels(set)
            .map_err(|e| LabelingError::LabelerFailure {
                key: utt.key(),
                source: Box::new(e.into()),
            })?;
    }
    Ok(sets)
}

/// Keeps a disease iff at least two of the three voters emit it, whatever
/// the status. The kept status is the precedence merge over the agreeing
/// voters (`Present > Uncertain > Absent`).
pub fn consensus(votes: &[LabelSet]) -> Result<LabelSet, LabelingError> {
    if votes.len() != 3 {
        return Err(LabelingError::WrongVoterCount(votes.len()));
    }
    let mut out = LabelSet::new();
    for disease in votes.iter().flat_map(|v| v.diseases()) {
        if out.contains(disease) {
            continue;
        }
        let supporters: Vec<Status> = votes.iter().filter_map(|v| v.status(disease)).collect();
        if let Some(status) = (supporters.len() >= 2)
            .then(|| supporters.into_iter().reduce(Status::merge))
            .flatten()
        {
            out.insert(disease, status);
        }
    }
    Ok(out)
}

/// Per-utterance consensus over a batch; each entry holds the three votes.
pub fn consensus_batch(votes: &[Vec<LabelSet>]) -> Result<Vec<LabelSet>, LabelingError> {
    votes.iter().map(|v| consensus(v)).collect()
}

/// Drops utterances whose label set is empty, preserving order.
pub fn discard_unlabeled<T>(records: Vec<(T, LabelSet)>) -> Vec<(T, LabelSet)> {
    records
        .into_iter()
        .filter(|(_, labels)| !labels.is_empty())
        .collect()
}
