//! Score tabulation and JSON/CSV export.

use std::collections::BTreeMap;

use serde::Serialize;

use super::{AlignmentMode, AverageMode, MetricsError, Prf, SrrScores};
use crate::report::AnatomicCategory;
use crate::taxonomy::LabelSpace;

/// Score names computed by this crate; external scores may not reuse them.
pub const BUILTIN_SCORE_NAMES: [&str; 7] = [
    "F1-SRR-BERT",
    "BLEU",
    "ROUGE-L",
    "Precision",
    "Recall",
    "F1-Score",
    "Category",
];

/// One (label space, averaging mode) line of a [`ScoreReport`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoreRow {
    pub space: LabelSpace,
    pub mode: AverageMode,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

/// Everything the evaluator reports for one split (or one study).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoreReport {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub study_id: Option<String>,
    pub split: String,
    pub alignment: AlignmentMode,
    /// F1-SRR-BERT rows.
    pub scores: Vec<ScoreRow>,
    /// Category F1 per averaging mode.
    pub category: BTreeMap<AverageMode, Prf>,
    /// BLEU and ROUGE-L, in `[0, 100]`.
    pub traditional: BTreeMap<String, f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub per_class: Option<BTreeMap<LabelSpace, BTreeMap<String, Prf>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub per_organ: Option<BTreeMap<LabelSpace, BTreeMap<AnatomicCategory, Prf>>>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub external: BTreeMap<String, f64>,
}

impl ScoreReport {
    pub fn new(split: impl Into<String>, alignment: AlignmentMode) -> Self {
        ScoreReport {
            study_id: None,
            split: split.into(),
            alignment,
            scores: Vec::new(),
            category: BTreeMap::new(),
            traditional: BTreeMap::new(),
            per_class: None,
            per_organ: None,
            external: BTreeMap::new(),
        }
    }

    /// Appends the rows of `scores` (and its per-class table when
    /// `per_class` is set).
    pub fn add_srr(&mut self, scores: &SrrScores, per_class: bool) {
        for (&mode, prf) in &scores.by_mode {
            self.scores.push(ScoreRow {
                space: scores.space,
                mode,
                precision: prf.precision,
                recall: prf.recall,
                f1: prf.f1,
                support: prf.support,
            });
        }
        if per_class {
            self.per_class
                .get_or_insert_with(BTreeMap::new)
                .insert(scores.space, scores.per_class.clone());
        }
    }

    pub fn row(&self, space: LabelSpace, mode: AverageMode) -> Option<&ScoreRow> {
        self.scores
            .iter()
            .find(|r| r.space == space && r.mode == mode)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("score report serializes")
    }

    /// One CSV line per (space, mode) with the traditional metrics, category
    /// F1 and external scores repeated on every line.
    pub fn to_csv(&self) -> String {
        let mut writer = csv::Writer::from_writer(Vec::new());
        let mut header: Vec<String> = [
            "split", "space", "alignment", "mode", "BLEU", "ROUGE-L", "Precision", "Recall",
            "F1-Score", "Support", "Category",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        header.extend(self.external.keys().cloned());
        writer.write_record(&header).expect("in-memory csv");
        let fmt = |v: Option<f64>| v.map(|v| format!("{v:.4}")).unwrap_or_default();
        for row in &self.scores {
            let mut record = vec![
                self.split.clone(),
                row.space.to_string(),
                self.alignment.to_string(),
                row.mode.to_string(),
                fmt(self.traditional.get("BLEU").copied()),
                fmt(self.traditional.get("ROUGE-L").copied()),
                fmt(Some(row.precision)),
                fmt(Some(row.recall)),
                fmt(Some(row.f1)),
                row.support.to_string(),
                fmt(self.category.get(&row.mode).map(|p| p.f1)),
            ];
            record.extend(self.external.values().map(|v| fmt(Some(*v))));
            writer.write_record(&record).expect("in-memory csv");
        }
        String::from_utf8(writer.into_inner().expect("in-memory csv")).expect("utf-8 csv")
    }
}

/// Attaches scores computed by other tools (BERTScore, F1-RadGraph, ...) so
/// they are tabulated and exported alongside the built-in ones.
pub fn merge_external_scores(
    mut report: ScoreReport,
    external: &BTreeMap<String, f64>,
) -> Result<ScoreReport, MetricsError> {
    for (name, &value) in external {
        let taken = BUILTIN_SCORE_NAMES
            .iter()
            .any(|b| b.eq_ignore_ascii_case(name))
            || report.traditional.contains_key(name)
            || report.external.contains_key(name);
        if taken {
            return Err(MetricsError::NameCollision(name.clone()));
        }
        report.external.insert(name.clone(), value);
    }
    Ok(report)
}
