//! Labels produced outside this crate, replayed from a JSON-lines file.
//!
//! Each row names one utterance, either as `{"study_id", "origin"}` or as a
//! single `"utterance_id"` string (`<study>#findings/<Category>/<i>` or
//! `<study>#impression/<rank>`), plus its `labels`.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Labeler, LabelingError};
use crate::taxonomy::{LabelSet, Taxonomy};
use crate::utterance::{Origin, Utterance, UtteranceKey};

/// One row of a prediction file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictionRow {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub study_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub origin: Option<Origin>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub utterance_id: Option<String>,
    pub labels: LabelSet,
}

impl PredictionRow {
    pub fn new(key: &UtteranceKey, labels: LabelSet) -> Self {
        PredictionRow {
            study_id: Some(key.study_id.clone()),
            origin: Some(key.origin),
            utterance_id: None,
            labels,
        }
    }

    pub fn key(&self) -> Result<UtteranceKey, String> {
        match (&self.study_id, &self.origin, &self.utterance_id) {
            (Some(study_id), Some(origin), None) => Ok(UtteranceKey {
                study_id: study_id.clone(),
                origin: *origin,
            }),
            (None, None, Some(id)) => id.parse(),
            _ => Err("row needs either study_id and origin, or utterance_id".into()),
        }
    }
}

/// Serves stored label sets by utterance identity. Row order in the file is
/// irrelevant.
#[derive(Debug, Clone, Default)]
pub struct PredictionLabeler {
    rows: HashMap<UtteranceKey, (usize, LabelSet)>,
}

impl PredictionLabeler {
    /// Parses and checks a prediction file: one row per utterance, every
    /// disease a leaf of `taxonomy`.
    pub fn from_jsonl(text: &str, taxonomy: &Taxonomy) -> Result<Self, LabelingError> {
        let mut rows = HashMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let violation = |message: String| LabelingError::SchemaViolation { line, message };
            if raw.trim().is_empty() {
                continue;
            }
            let row: PredictionRow =
                serde_json::from_str(raw).map_err(|e| violation(e.to_string()))?;
            let key = row.key().map_err(violation)?;
            taxonomy
                .check_labels(&row.labels)
                .map_err(|e| violation(e.to_string()))?;
            if let Some((first, _)) = rows.insert(key.clone(), (line, row.labels)) {
                return Err(violation(format!("{key} already labeled on line {first}")));
            }
        }
        Ok(PredictionLabeler { rows })
    }

    pub fn load(path: &Path, taxonomy: &Taxonomy) -> Result<Self, LabelingError> {
        let text = std::fs::read_to_string(path).map_err(|source| LabelingError::Io {
            path: path.display().to_string(),
            source,
        })?;
        PredictionLabeler::from_jsonl(&text, taxonomy)
    }

    /// Fails on the first row (by line number) naming an utterance that is
    /// not in `corpus`.
    pub fn verify_against(&self, corpus: &[Utterance]) -> Result<(), LabelingError> {
        let known: std::collections::HashSet<UtteranceKey> = corpus.iter().map(|u| u.key()).collect();
        let mut stray: Vec<(usize, &UtteranceKey)> = self
            .rows
            .iter()
            .filter(|(key, _)| !known.contains(*key))
            .map(|(key, (line, _))| (*line, key))
            .collect();
        stray.sort();
        match stray.first() {
            Some((line, key)) => Err(LabelingError::SchemaViolation {
                line: *line,
                message: format!("{key} is not an utterance of the corpus"),
            }),
            None => Ok(()),
        }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn get(&self, key: &UtteranceKey) -> Option<&LabelSet> {
        self.rows.get(key).map(|(_, labels)| labels)
    }
}

impl Labeler for PredictionLabeler {
    fn label(&self, utterances: &[Utterance]) -> Result<Vec<LabelSet>, LabelingError> {
        utterances
            .iter()
            .map(|u| {
                let key = u.key();
                self.get(&key)
                    .cloned()
                    .ok_or(LabelingError::UnknownUtterance(key))
            })
            .collect()
    }
}

/// Serializes rows as JSON lines (trailing newline included when non-empty).
pub fn write_predictions(rows: &[PredictionRow]) -> String {
    rows.iter()
        .map(|r| serde_json::to_string(r).expect("row serializes") + "\n")
        .collect()
}
