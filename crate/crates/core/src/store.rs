//! On-disk corpus: studies, utterance labels and review records.
//!
//! A store is a directory of three JSON-lines logs (`studies.jsonl`,
//! `utterances.jsonl`, `reviews.jsonl`). Rows are appended and fsynced
//! before a write returns; on open the logs are replayed and the last row
//! for a key wins. [`CorpusStore::compact`] rewrites each log with only the
//! live rows. A torn final line left by a crash is dropped on open.
//!
//! Writes are serialized through a single writer lock; readers work on the
//! in-memory state and never touch the files.

use std::collections::{BTreeMap, HashMap};
use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};

use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};

use crate::report::{parse_report, ParseIssue, ParseMode, StructuredReport};
use crate::taxonomy::LabelSet;
use crate::utterance::{Origin, UtteranceKey};

const STUDIES: &str = "studies.jsonl";
const UTTERANCES: &str = "utterances.jsonl";
const REVIEWS: &str = "reviews.jsonl";

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("{0}: no such file")]
    FileNotFound(PathBuf),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    SchemaViolation {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("unknown study {0:?}")]
    UnknownStudy(String),
    #[error("study {study_id}: expected version {expected}, current is {current}")]
    VersionConflict {
        study_id: String,
        expected: u64,
        current: u64,
    },
    #[error("edited report does not parse ({} issues)", .0.len())]
    UnparsableEdit(Vec<ParseIssue>),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Validate,
    Test,
    TestReviewed,
}

impl Split {
    pub const ALL: [Split; 4] = [Split::Train, Split::Validate, Split::Test, Split::TestReviewed];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validate => "validate",
            Split::Test => "test",
            Split::TestReviewed => "test_reviewed",
        }
    }
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_lowercase().replace([' ', '-'], "_");
        Split::ALL
            .into_iter()
            .find(|split| split.as_str() == norm)
            .ok_or_else(|| format!("unknown split {s:?}"))
    }
}

/// One study row.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Study {
    pub study_id: String,
    #[serde(default)]
    pub source: String,
    pub original_text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub structured_text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<Split>,
}

impl Study {
    /// The structured report, lenient-parsed. `None` when there is no
    /// structured text or nothing in it parses.
    pub fn structured(&self) -> Option<StructuredReport> {
        let text = self.structured_text.as_deref()?;
        parse_report(text, ParseMode::Lenient).ok().map(|p| p.report)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Consensus,
    Reviewed,
    Baseline,
    External,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UtteranceRecord {
    pub study_id: String,
    pub origin: Origin,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<LabelSet>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Provenance>,
}

impl UtteranceRecord {
    pub fn key(&self) -> UtteranceKey {
        UtteranceKey {
            study_id: self.study_id.clone(),
            origin: self.origin,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelCorrection {
    pub origin: Origin,
    pub labels: LabelSet,
}

/// A reviewer's edit of one study. `version` counts saves per study,
/// starting at 1.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReviewRecord {
    pub study_id: String,
    pub reviewer: String,
    pub edited_text: String,
    #[serde(default)]
    pub label_corrections: Vec<LabelCorrection>,
    pub version: u64,
    pub created_at: String,
    pub updated_at: String,
}

impl ReviewRecord {
    pub fn edited(&self) -> Option<StructuredReport> {
        parse_report(&self.edited_text, ParseMode::Lenient)
            .ok()
            .map(|p| p.report)
    }
}

/// What a caller submits; the store fills in version and timestamps.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewDraft {
    pub study_id: String,
    pub reviewer: String,
    pub edited_text: String,
    #[serde(default)]
    pub label_corrections: Vec<LabelCorrection>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImportFormat {
    Jsonl,
    Csv,
}

impl ImportFormat {
    /// `.csv` is CSV, anything else JSON lines.
    pub fn from_path(path: &Path) -> ImportFormat {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => ImportFormat::Csv,
            _ => ImportFormat::Jsonl,
        }
    }
}

/// A rejected import row.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RowError {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ImportReport {
    /// Distinct study ids written.
    pub imported: usize,
    pub errors: Vec<RowError>,
}

#[derive(Debug, Deserialize)]
struct CsvStudy {
    study_id: String,
    #[serde(default)]
    source: String,
    original_text: String,
    #[serde(default)]
    structured_text: Option<String>,
    #[serde(default)]
    split: Option<String>,
}

fn check_study(study: &Study) -> Result<(), String> {
    if study.study_id.trim().is_empty() {
        return Err("study_id is empty".into());
    }
    if study.study_id.contains('#') {
        return Err("study_id may not contain '#'".into());
    }
    Ok(())
}

/// A record with its 1-based line number, or the reason it was rejected.
type NumberedRow<T> = (usize, Result<T, String>);

/// Deserializes CSV records, pairing each with its 1-based line number.
fn csv_rows<T: for<'de> Deserialize<'de>>(text: &str, path: &Path) -> Result<Vec<NumberedRow<T>>, StoreError> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| StoreError::SchemaViolation {
            path: path.to_path_buf(),
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    let mut out = Vec::new();
    let mut record = csv::StringRecord::new();
    loop {
        let line = reader.position().line() as usize;
        match reader.read_record(&mut record) {
            Ok(false) => break,
            Ok(true) => {
                let line = record.position().map_or(line, |p| p.line() as usize);
                out.push((line, record.deserialize(Some(&headers)).map_err(|e| e.to_string())));
            }
            Err(e) => out.push((line, Err(e.to_string()))),
        }
    }
    Ok(out)
}

/// Reads study rows from a JSON-lines or CSV file. Bad rows are reported
/// with their line number and skipped.
pub fn read_studies(path: &Path, format: ImportFormat) -> Result<(Vec<Study>, Vec<RowError>), StoreError> {
    if !path.exists() {
        return Err(StoreError::FileNotFound(path.to_path_buf()));
    }
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut studies = Vec::new();
    let mut errors = Vec::new();
    match format {
        ImportFormat::Jsonl => {
            for (idx, line) in text.lines().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                match serde_json::from_str::<Study>(line)
                    .map_err(|e| e.to_string())
                    .and_then(|s| check_study(&s).map(|_| s))
                {
                    Ok(study) => studies.push(study),
                    Err(message) => errors.push(RowError {
                        line: idx + 1,
                        message,
                    }),
                }
            }
        }
        ImportFormat::Csv => {
            for (line, row) in csv_rows::<CsvStudy>(&text, path)? {
                let parsed = row.and_then(|r| {
                    let split = match r.split.as_deref().map(str::trim) {
                        None | Some("") => None,
                        Some(s) => Some(s.parse::<Split>()?),
                    };
                    let study = Study {
                        study_id: r.study_id,
                        source: r.source,
                        original_text: r.original_text,
                        structured_text: r.structured_text.filter(|t| !t.is_empty()),
                        split,
                    };
                    check_study(&study)?;
                    Ok(study)
                });
                match parsed {
                    Ok(study) => studies.push(study),
                    Err(message) => errors.push(RowError { line, message }),
                }
            }
        }
    }
    Ok((studies, errors))
}

#[derive(Debug, Default)]
struct State {
    studies: BTreeMap<String, Study>,
    utterances: BTreeMap<UtteranceKey, UtteranceRecord>,
    reviews: HashMap<String, Vec<ReviewRecord>>,
}

struct Logs {
    studies: File,
    utterances: File,
    reviews: File,
}

/// Handle on a corpus directory. Safe to share across threads.
pub struct CorpusStore {
    dir: PathBuf,
    state: RwLock<State>,
    writer: Mutex<Logs>,
}

fn replay<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, StoreError> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let complete = text.ends_with('\n') || text.is_empty();
    let lines: Vec<&str> = text.lines().collect();
    let mut out = Vec::with_capacity(lines.len());
    for (idx, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(line) {
            Ok(row) => out.push(row),
            Err(_) if idx + 1 == lines.len() && !complete => {
                log::warn!("{}: dropping torn final line {}", path.display(), idx + 1);
                let keep = text.len() - line.len();
                OpenOptions::new()
                    .write(true)
                    .open(path)
                    .and_then(|f| f.set_len(keep as u64))
                    .map_err(io_err(path))?;
            }
            Err(e) => {
                return Err(StoreError::SchemaViolation {
                    path: path.to_path_buf(),
                    line: idx + 1,
                    message: e.to_string(),
                })
            }
        }
    }
    Ok(out)
}

fn open_log(path: &Path) -> Result<File, StoreError> {
    OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(io_err(path))
}

fn append_rows<T: Serialize>(file: &mut File, path: &Path, rows: &[T]) -> Result<(), StoreError> {
    let mut buf = Vec::new();
    for row in rows {
        serde_json::to_writer(&mut buf, row).expect("row serializes");
        buf.push(b'\n');
    }
    file.write_all(&buf).map_err(io_err(path))?;
    file.sync_data().map_err(io_err(path))
}

fn now() -> String {
    let t: DateTime<Utc> = Utc::now();
    t.to_rfc3339_opts(SecondsFormat::Millis, true)
}

impl CorpusStore {
    /// Opens (creating if needed) the store at `dir` and replays its logs.
    pub fn open(dir: impl Into<PathBuf>) -> Result<CorpusStore, StoreError> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        let mut state = State::default();
        for study in replay::<Study>(&dir.join(STUDIES))? {
            state.studies.insert(study.study_id.clone(), study);
        }
        for record in replay::<UtteranceRecord>(&dir.join(UTTERANCES))? {
            state.utterances.insert(record.key(), record);
        }
        for review in replay::<ReviewRecord>(&dir.join(REVIEWS))? {
            state
                .reviews
                .entry(review.study_id.clone())
                .or_default()
                .push(review);
        }
        let logs = Logs {
            studies: open_log(&dir.join(STUDIES))?,
            utterances: open_log(&dir.join(UTTERANCES))?,
            reviews: open_log(&dir.join(REVIEWS))?,
        };
        Ok(CorpusStore {
            dir,
            state: RwLock::new(state),
            writer: Mutex::new(logs),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn read(&self) -> std::sync::RwLockReadGuard<'_, State> {
        self.state.read().expect("store state lock")
    }

    fn write_lock(&self) -> std::sync::MutexGuard<'_, Logs> {
        self.writer.lock().expect("store writer lock")
    }

    /// Upserts studies by id.
    pub fn upsert_studies(&self, studies: &[Study]) -> Result<usize, StoreError> {
        let mut logs = self.write_lock();
        append_rows(&mut logs.studies, &self.dir.join(STUDIES), studies)?;
        let mut state = self.state.write().expect("store state lock");
        let mut ids = std::collections::BTreeSet::new();
        for study in studies {
            ids.insert(study.study_id.clone());
            state.studies.insert(study.study_id.clone(), study.clone());
        }
        Ok(ids.len())
    }

    /// Imports a study file. Valid rows are upserted even when other rows
    /// are rejected.
    pub fn import_studies(&self, path: &Path, format: ImportFormat) -> Result<ImportReport, StoreError> {
        let (studies, errors) = read_studies(path, format)?;
        let imported = self.upsert_studies(&studies)?;
        Ok(ImportReport { imported, errors })
    }

    /// All studies as JSON lines, ordered by study id.
    pub fn export_studies(&self) -> String {
        self.read()
            .studies
            .values()
            .map(|s| serde_json::to_string(s).expect("study serializes") + "\n")
            .collect()
    }

    /// Sets splits for the listed studies. Fails without writing anything if
    /// an id is unknown.
    pub fn assign_splits(&self, manifest: &BTreeMap<String, Split>) -> Result<(), StoreError> {
        let mut logs = self.write_lock();
        let updated: Vec<Study> = {
            let state = self.read();
            manifest
                .iter()
                .map(|(id, split)| {
                    let mut study = state
                        .studies
                        .get(id)
                        .cloned()
                        .ok_or_else(|| StoreError::UnknownStudy(id.clone()))?;
                    study.split = Some(*split);
                    Ok(study)
                })
                .collect::<Result<_, StoreError>>()?
        };
        append_rows(&mut logs.studies, &self.dir.join(STUDIES), &updated)?;
        let mut state = self.state.write().expect("store state lock");
        for study in updated {
            state.studies.insert(study.study_id.clone(), study);
        }
        Ok(())
    }

    pub fn split_counts(&self) -> BTreeMap<Split, usize> {
        let mut counts = BTreeMap::new();
        for split in self.read().studies.values().filter_map(|s| s.split) {
            *counts.entry(split).or_insert(0) += 1;
        }
        counts
    }

    pub fn study(&self, study_id: &str) -> Option<Study> {
        self.read().studies.get(study_id).cloned()
    }

    pub fn study_ids(&self) -> Vec<String> {
        self.read().studies.keys().cloned().collect()
    }

    pub fn studies(&self) -> Vec<Study> {
        self.read().studies.values().cloned().collect()
    }

    pub fn studies_in(&self, split: Split) -> Vec<Study> {
        self.read()
            .studies
            .values()
            .filter(|s| s.split == Some(split))
            .cloned()
            .collect()
    }

    /// Upserts utterance records by key.
    pub fn put_utterances(&self, records: &[UtteranceRecord]) -> Result<(), StoreError> {
        let mut logs = self.write_lock();
        append_rows(&mut logs.utterances, &self.dir.join(UTTERANCES), records)?;
        let mut state = self.state.write().expect("store state lock");
        for record in records {
            state.utterances.insert(record.key(), record.clone());
        }
        Ok(())
    }

    /// Stored utterances of a study in key order.
    pub fn utterances_of(&self, study_id: &str) -> Vec<UtteranceRecord> {
        self.read()
            .utterances
            .values()
            .filter(|u| u.study_id == study_id)
            .cloned()
            .collect()
    }

    pub fn utterance(&self, key: &UtteranceKey) -> Option<UtteranceRecord> {
        self.read().utterances.get(key).cloned()
    }

    pub fn current_version(&self, study_id: &str) -> u64 {
        self.read()
            .reviews
            .get(study_id)
            .and_then(|v| v.last())
            .map_or(0, |r| r.version)
    }

    /// Stores a review iff `expected_version` equals the study's current
    /// version (0 before the first review). Returns the new version.
    pub fn save_review(&self, draft: ReviewDraft, expected_version: u64) -> Result<ReviewRecord, StoreError> {
        if let Err(issues) = parse_report(&draft.edited_text, ParseMode::Lenient) {
            return Err(StoreError::UnparsableEdit(issues));
        }
        let mut logs = self.write_lock();
        let (current, created_at) = {
            let state = self.read();
            if !state.studies.contains_key(&draft.study_id) {
                return Err(StoreError::UnknownStudy(draft.study_id));
            }
            let history = state.reviews.get(&draft.study_id);
            (
                history.and_then(|v| v.last()).map_or(0, |r| r.version),
                history.and_then(|v| v.first()).map(|r| r.created_at.clone()),
            )
        };
        if current != expected_version {
            return Err(StoreError::VersionConflict {
                study_id: draft.study_id,
                expected: expected_version,
                current,
            });
        }
        let stamp = now();
        let record = ReviewRecord {
            study_id: draft.study_id,
            reviewer: draft.reviewer,
            edited_text: draft.edited_text,
            label_corrections: draft.label_corrections,
            version: current + 1,
            created_at: created_at.unwrap_or_else(|| stamp.clone()),
            updated_at: stamp,
        };
        append_rows(&mut logs.reviews, &self.dir.join(REVIEWS), std::slice::from_ref(&record))?;
        self.state
            .write()
            .expect("store state lock")
            .reviews
            .entry(record.study_id.clone())
            .or_default()
            .push(record.clone());
        Ok(record)
    }

    pub fn latest_review(&self, study_id: &str) -> Option<ReviewRecord> {
        self.read().reviews.get(study_id).and_then(|v| v.last()).cloned()
    }

    pub fn review_history(&self, study_id: &str) -> Vec<ReviewRecord> {
        self.read().reviews.get(study_id).cloned().unwrap_or_default()
    }

    /// Latest review of every reviewed study, ordered by study id.
    pub fn latest_reviews(&self) -> Vec<ReviewRecord> {
        let state = self.read();
        let mut out: Vec<ReviewRecord> = state
            .reviews
            .values()
            .filter_map(|v| v.last().cloned())
            .collect();
        out.sort_by(|a, b| a.study_id.cmp(&b.study_id));
        out
    }

    /// Rewrites every log with only its live rows (full review history is
    /// kept). Each file is replaced atomically.
    pub fn compact(&self) -> Result<(), StoreError> {
        let mut logs = self.write_lock();
        let state = self.read();
        let rewrite = |name: &str, rows: &mut dyn Iterator<Item = String>| -> Result<File, StoreError> {
            let path = self.dir.join(name);
            let tmp = self.dir.join(format!("{name}.tmp"));
            let file = File::create(&tmp).map_err(io_err(&tmp))?;
            let mut w = BufWriter::new(file);
            for row in rows {
                writeln!(w, "{row}").map_err(io_err(&tmp))?;
            }
            let file = w.into_inner().map_err(|e| io_err(&tmp)(e.into_error()))?;
            file.sync_all().map_err(io_err(&tmp))?;
            fs::rename(&tmp, &path).map_err(io_err(&path))?;
            open_log(&path)
        };
        logs.studies = rewrite(STUDIES, &mut state.studies.values().map(json_line))?;
        logs.utterances = rewrite(UTTERANCES, &mut state.utterances.values().map(json_line))?;
        let mut reviews: Vec<&ReviewRecord> = state.reviews.values().flatten().collect();
        reviews.sort_by(|a, b| (&a.study_id, a.version).cmp(&(&b.study_id, b.version)));
        logs.reviews = rewrite(REVIEWS, &mut reviews.into_iter().map(json_line))?;
        Ok(())
    }
}

fn json_line<T: Serialize>(row: &T) -> String {
    serde_json::to_string(row).expect("row serializes")
}

/// Reads a split manifest: CSV with `study_id,split` columns, or a JSON
/// object mapping study ids to splits.
pub fn read_manifest(path: &Path) -> Result<BTreeMap<String, Split>, StoreError> {
    if !path.exists() {
        return Err(StoreError::FileNotFound(path.to_path_buf()));
    }
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let violation = |line: usize, message: String| StoreError::SchemaViolation {
        path: path.to_path_buf(),
        line,
        message,
    };
    if ImportFormat::from_path(path) == ImportFormat::Jsonl {
        return serde_json::from_str(&text).map_err(|e| violation(e.line(), e.to_string()));
    }
    #[derive(Deserialize)]
    struct Row {
        study_id: String,
        split: String,
    }
    let mut out = BTreeMap::new();
    for (line, row) in csv_rows::<Row>(&text, path)? {
        let row = row.map_err(|m| violation(line, m))?;
        let split = row.split.parse().map_err(|m| violation(line, m))?;
        out.insert(row.study_id, split);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn study(id: &str) -> Study {
        Study {
            study_id: id.into(),
            source: "fixture".into(),
            original_text: format!("report {id}"),
            structured_text: Some("Impression:\n1. Normal.".into()),
            split: None,
        }
    }

    fn draft(id: &str, text: &str) -> ReviewDraft {
        ReviewDraft {
            study_id: id.into(),
            reviewer: "r1".into(),
            edited_text: text.into(),
            label_corrections: Vec::new(),
        }
    }

    #[test]
    fn upsert_and_reopen() {
        let dir = tempfile::tempdir().unwrap();
        let store = CorpusStore::open(dir.path()).unwrap();
        assert_eq!(store.upsert_studies(&[study("a"), study("b")]).unwrap(), 2);
        let mut changed = study("a");
        changed.original_text = "changed".into();
        store.upsert_studies(&[changed.clone()]).unwrap();
        drop(store);
        let store = CorpusStore::open(dir.path()).unwrap();
        assert_eq!(store.study("a").unwrap(), changed);
        assert_eq!(store.study_ids(), vec!["a", "b"]);
    }

    #[test]
    fn review_versions() {
        let dir = tempfile::tempdir().unwrap();
        let store = CorpusStore::open(dir.path()).unwrap();
        store.upsert_studies(&[study("a")]).unwrap();
        let first = store.save_review(draft("a", "Impression:\n1. Fine."), 0).unwrap();
        assert_eq!(first.version, 1);
        assert!(matches!(
            store.save_review(draft("a", "Impression:\n1. Other."), 0),
            Err(StoreError::VersionConflict { current: 1, .. })
        ));
        let second = store.save_review(draft("a", "Impression:\n1. Other."), 1).unwrap();
        assert_eq!(second.version, 2);
        assert_eq!(second.created_at, first.created_at);
        assert!(matches!(
            store.save_review(draft("zz", "Impression:\n1. x"), 0),
            Err(StoreError::UnknownStudy(_))
        ));
        assert!(matches!(
            store.save_review(draft("a", "   "), 2),
            Err(StoreError::UnparsableEdit(_))
        ));
        store.compact().unwrap();
        drop(store);
        let store = CorpusStore::open(dir.path()).unwrap();
        assert_eq!(store.current_version("a"), 2);
        assert_eq!(store.review_history("a").len(), 2);
    }

    #[test]
    fn torn_tail_is_dropped() {
        let dir = tempfile::tempdir().unwrap();
        {
            let store = CorpusStore::open(dir.path()).unwrap();
            store.upsert_studies(&[study("a")]).unwrap();
        }
        let path = dir.path().join(STUDIES);
        let mut f = OpenOptions::new().append(true).open(&path).unwrap();
        f.write_all(b"{\"study_id\":\"b\",\"orig").unwrap();
        drop(f);
        let store = CorpusStore::open(dir.path()).unwrap();
        assert_eq!(store.study_ids(), vec!["a"]);
        store.upsert_studies(&[study("c")]).unwrap();
        drop(store);
        let store = CorpusStore::open(dir.path()).unwrap();
        assert_eq!(store.study_ids(), vec!["a", "c"]);
    }

    #[test]
    fn splits() {
        let dir = tempfile::tempdir().unwrap();
        let store = CorpusStore::open(dir.path()).unwrap();
        store.upsert_studies(&[study("a"), study("b")]).unwrap();
        let manifest = BTreeMap::from([("a".to_string(), Split::Train), ("b".to_string(), Split::Test)]);
        store.assign_splits(&manifest).unwrap();
        assert_eq!(store.split_counts()[&Split::Train], 1);
        let bad = BTreeMap::from([("nope".to_string(), Split::Train)]);
        assert!(matches!(store.assign_splits(&bad), Err(StoreError::UnknownStudy(_))));
        assert_eq!("Test Reviewed".parse::<Split>().unwrap(), Split::TestReviewed);
    }

    #[test]
    fn csv_import_reports_bad_rows() {
        let dir = tempfile::tempdir().unwrap();
        let csv_path = dir.path().join("in.csv");
        fs::write(
            &csv_path,
            "study_id,source,original_text,structured_text,split\ns1,mimic,text one,,train\ns2,mimic,text two,,bogus\n,mimic,x,,\n",
        )
        .unwrap();
        let store = CorpusStore::open(dir.path().join("store")).unwrap();
        let report = store.import_studies(&csv_path, ImportFormat::Csv).unwrap();
        assert_eq!(report.imported, 1);
        assert_eq!(report.errors.len(), 2);
        assert_eq!(report.errors[0].line, 3);
        assert_eq!(report.errors[1].line, 4);
        assert!(matches!(
            store.import_studies(&dir.path().join("missing.jsonl"), ImportFormat::Jsonl),
            Err(StoreError::FileNotFound(_))
        ));
    }
}
