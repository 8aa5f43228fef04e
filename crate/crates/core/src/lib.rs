//! Toolkit for structured chest X-ray radiology reports.
//!
//! - [`report`]: the plain-text report grammar, parser and canonical renderer
//! - [`validate`]: heuristic content checks (identifiers, prior-study references)
//! - [`utterance`]: utterance extraction and corpus-wide keys
//! - [`taxonomy`]: disease tree, statuses, label spaces and projections
//! - [`labeling`]: labelers, LLM prompts and 2-of-3 consensus voting
//! - [`metrics`]: multilabel P/R/F1, report-level F1 scoring, BLEU, ROUGE-L
//! - [`textdiff`]: word-level diff statistics for reader studies
//! - [`store`]: on-disk corpus of studies, utterance labels and reviews
//! - [`service`]: HTTP API backing the review workflow
//! - [`cli`]: the `srrg` command-line tool

pub mod cli;
pub mod labeling;
pub mod metrics;
pub mod report;
pub mod service;
pub mod store;
pub mod taxonomy;
pub mod textdiff;
pub mod utterance;
pub mod validate;

pub use report::{
    parse_report, render_report, AnatomicCategory, ParseIssue, ParseIssueCode, ParseMode,
    SectionKind, StructuredReport,
};
pub use taxonomy::{GranularLabel, LabelSet, LabelSpace, Status, Taxonomy};
pub use utterance::{extract_utterances, Origin, Utterance, UtteranceKey};
pub use validate::{validate_desiderata, ValidationConfig, Violation};
