//! Lexicon labeler. Meant as a deterministic test oracle and a desk-scale
//! stand-in for a trained utterance classifier; it is not a clinical tool.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::LazyLock;

use regex::Regex;
use serde::Deserialize;

use super::{Labeler, LabelingError};
use crate::taxonomy::{LabelSet, Status, Taxonomy, NO_FINDING};
use crate::utterance::Utterance;

const BUNDLED_LEXICON: &str = include_str!("../../data/keyword_lexicon.json");

static NEGATION: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"\b(?:no|without|absent|negative for)\b").unwrap());
static HEDGE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"\b(?:may|might|possible|possibly|likely|probable|cannot exclude|cannot be excluded|not excluded)\b")
        .unwrap()
});

/// Target of a lexicon phrase. A fixed status bypasses cue detection.
#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(untagged)]
pub enum LexiconEntry {
    Disease(String),
    Fixed { disease: String, status: Status },
}

impl LexiconEntry {
    fn disease(&self) -> &str {
        match self {
            LexiconEntry::Disease(d) | LexiconEntry::Fixed { disease: d, .. } => d,
        }
    }
}

/// Assigns a disease whenever one of its phrases occurs (whole words) in the
/// lowercased utterance. Longer phrases win over shorter overlapping ones.
/// A negation cue anywhere in the utterance makes the status `Absent`, a
/// hedge cue makes it `Uncertain` (hedges win over negations). No match
/// yields `{No Finding (Present)}`.
#[derive(Debug, Clone)]
pub struct KeywordLabeler {
    lexicon: BTreeMap<String, LexiconEntry>,
    matcher: Regex,
}

impl KeywordLabeler {
    pub fn new(
        lexicon: BTreeMap<String, LexiconEntry>,
        taxonomy: &Taxonomy,
    ) -> Result<KeywordLabeler, LabelingError> {
        if lexicon.is_empty() {
            return Err(LabelingError::EmptyLexicon);
        }
        let mut resolved = BTreeMap::new();
        for (phrase, entry) in lexicon {
            let invalid = |message: String| LabelingError::InvalidLexicon {
                phrase: phrase.clone(),
                message,
            };
            if phrase.trim().is_empty() {
                return Err(invalid("phrase is empty".into()));
            }
            if phrase != phrase.to_lowercase() {
                return Err(invalid("phrase must be lowercase".into()));
            }
            let disease = taxonomy
                .resolve(entry.disease())
                .filter(|d| taxonomy.is_leaf(d).unwrap_or(false))
                .ok_or_else(|| invalid(format!("{:?} is not a taxonomy leaf", entry.disease())))?
                .to_string();
            let entry = match entry {
                LexiconEntry::Disease(_) => LexiconEntry::Disease(disease),
                LexiconEntry::Fixed { status, .. } => LexiconEntry::Fixed { disease, status },
            };
            resolved.insert(phrase.trim().to_string(), entry);
        }
        let mut phrases: Vec<&String> = resolved.keys().collect();
        // Leftmost-first alternation: list longer phrases first.
        phrases.sort_by(|a, b| b.len().cmp(&a.len()).then(a.cmp(b)));
        let alternation: Vec<String> = phrases.iter().map(|p| regex::escape(p)).collect();
        let matcher = Regex::new(&format!(r"\b(?:{})\b", alternation.join("|")))
            .expect("escaped alternation is a valid regex");
        Ok(KeywordLabeler {
            lexicon: resolved,
            matcher,
        })
    }

    pub fn from_json(text: &str, taxonomy: &Taxonomy) -> Result<KeywordLabeler, LabelingError> {
        let lexicon: BTreeMap<String, LexiconEntry> =
            serde_json::from_str(text).map_err(|e| LabelingError::InvalidLexicon {
                phrase: String::new(),
                message: e.to_string(),
            })?;
        KeywordLabeler::new(lexicon, taxonomy)
    }

    pub fn load(path: &Path, taxonomy: &Taxonomy) -> Result<KeywordLabeler, LabelingError> {
        let text = std::fs::read_to_string(path).map_err(|source| LabelingError::Io {
            path: path.display().to_string(),
            source,
        })?;
        KeywordLabeler::from_json(&text, taxonomy)
    }

    /// The lexicon shipped with the crate, covering common phrasings of the
    /// bundled taxonomy's leaves.
    pub fn bundled(taxonomy: &Taxonomy) -> Result<KeywordLabeler, LabelingError> {
        KeywordLabeler::from_json(BUNDLED_LEXICON, taxonomy)
    }

    pub fn label_text(&self, text: &str) -> LabelSet {
        let lowered = text.to_lowercase();
        let cue_status = if HEDGE.is_match(&lowered) {
            Status::Uncertain
        } else if NEGATION.is_match(&lowered) {
            Status::Absent
        } else {
            Status::Present
        };
        let mut labels = LabelSet::new();
        for m in self.matcher.find_iter(&lowered) {
            match &self.lexicon[m.as_str()] {
                LexiconEntry::Disease(disease) => labels.insert(disease.as_str(), cue_status),
                LexiconEntry::Fixed { disease, status } => labels.insert(disease.as_str(), *status),
            }
        }
        if labels.is_empty() {
            labels.insert(NO_FINDING, Status::Present);
        }
        labels
    }
}

impl Labeler for KeywordLabeler {
    fn label(&self, utterances: &[Utterance]) -> Result<Vec<LabelSet>, LabelingError> {
        Ok(utterances.iter().map(|u| self.label_text(&u.text)).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labeler(pairs: &[(&str, &str)]) -> KeywordLabeler {
        let lexicon = pairs
            .iter()
            .map(|(p, d)| (p.to_string(), LexiconEntry::Disease(d.to_string())))
            .collect();
        KeywordLabeler::new(lexicon, &Taxonomy::bundled()).unwrap()
    }

    fn one(disease: &str, status: Status) -> LabelSet {
        [(disease, status)].into_iter().collect()
    }

    #[test]
    fn cues() {
        let kw = labeler(&[("pneumothorax", "Simple pneumothorax"), ("edema", "Edema")]);
        assert_eq!(
            kw.label_text("No pneumothorax."),
            one("Simple pneumothorax", Status::Absent)
        );
        assert_eq!(kw.label_text("Possible edema."), one("Edema", Status::Uncertain));
        assert_eq!(kw.label_text("Mild edema."), one("Edema", Status::Present));
        assert_eq!(kw.label_text("Clear."), one(NO_FINDING, Status::Present));
        // "no" must be a whole word.
        assert_eq!(kw.label_text("Known edema."), one("Edema", Status::Present));
    }

    #[test]
    fn longest_phrase_wins() {
        let kw = labeler(&[
            ("emphysema", "Emphysema"),
            ("subcutaneous emphysema", "Subcutaneous Emphysema"),
        ]);
        assert_eq!(
            kw.label_text("Subcutaneous emphysema in the left chest wall."),
            one("Subcutaneous Emphysema", Status::Present)
        );
    }

    #[test]
    fn lexicon_validation() {
        let tax = Taxonomy::bundled();
        assert!(matches!(
            KeywordLabeler::new(BTreeMap::new(), &tax),
            Err(LabelingError::EmptyLexicon)
        ));
        assert!(matches!(
            KeywordLabeler::from_json(r#"{"fog": "Fog"}"#, &tax),
            Err(LabelingError::InvalidLexicon { .. })
        ));
        assert!(matches!(
            KeywordLabeler::from_json(r#"{"Edema": "Edema"}"#, &tax),
            Err(LabelingError::InvalidLexicon { .. })
        ));
        let kw = KeywordLabeler::from_json(
            r#"{"stable lines": {"disease": "Suboptimal central line", "status": "Absent"}}"#,
            &tax,
        )
        .unwrap();
        assert_eq!(
            kw.label_text("Stable lines, may be fine."),
            one("Suboptimal central line", Status::Absent)
        );
    }

    #[test]
    fn bundled_lexicon_loads() {
        let kw = KeywordLabeler::bundled(&Taxonomy::bundled()).unwrap();
        assert_eq!(
            kw.label_text("Small left pleural effusion."),
            one("Simple pleural effusion", Status::Present)
        );
    }
}
