//! Content checks for structured reports.
//!
//! The identifier and historical-comparison checks are heuristics (regular
//! expressions plus phrase lexicons). They flag likely leaks for a reviewer;
//! an empty result is not a de-identification guarantee.

use std::collections::BTreeSet;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::report::{AnatomicCategory, SectionKind, StructuredReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ViolationKind {
    ImpressionNumbering,
    NonCanonicalHeader,
    EmptySection,
    IdentifierLeak,
    HistoricalComparison,
}

/// Where in the report a violation was found.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Location {
    pub section: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub category: Option<String>,
    /// 0-based bullet index for findings, 1-based rank for impression.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub index: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub location: Location,
    pub message: String,
}

/// Lexicons driving the heuristic checks. Phrases are matched
/// case-insensitively on word boundaries.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ValidationConfig {
    #[serde(default)]
    pub identifier_lexicon: Vec<String>,
    #[serde(default = "default_comparison_phrases")]
    pub comparison_phrases: Vec<String>,
}

fn default_comparison_phrases() -> Vec<String> {
    [
        "compared to prior",
        "compared with prior",
        "compared to the prior",
        "compared with the prior",
        "again seen",
        "again noted",
        "unchanged from",
        "previously seen",
        "since the prior",
        "since prior",
    ]
    .into_iter()
    .map(String::from)
    .collect()
}

impl Default for ValidationConfig {
    fn default() -> Self {
        ValidationConfig {
            identifier_lexicon: Vec::new(),
            comparison_phrases: default_comparison_phrases(),
        }
    }
}

static SLASH_DATE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"\b\d{1,2}/\d{1,2}/\d{2,4}\b").unwrap());
static ISO_DATE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"\b\d{4}-\d{2}-\d{2}\b").unwrap());

fn phrase_regex(phrase: &str) -> Option<Regex> {
    let phrase = phrase.trim();
    if phrase.is_empty() {
        return None;
    }
    Regex::new(&format!(r"(?i)\b{}\b", regex::escape(phrase))).ok()
}

struct Checker {
    identifiers: Vec<(String, Regex)>,
    comparisons: Vec<(String, Regex)>,
    out: Vec<Violation>,
}

impl Checker {
    fn new(config: &ValidationConfig) -> Self {
        let compile = |phrases: &[String]| {
            phrases
                .iter()
                .filter_map(|p| phrase_regex(p).map(|re| (p.clone(), re)))
                .collect()
        };
        Checker {
            identifiers: compile(&config.identifier_lexicon),
            comparisons: compile(&config.comparison_phrases),
            out: Vec::new(),
        }
    }

    fn push(&mut self, kind: ViolationKind, location: Location, message: String) {
        self.out.push(Violation {
            kind,
            location,
            message,
        });
    }

    fn scan(&mut self, text: &str, location: Location, clinical: bool) {
        for re in [&*SLASH_DATE, &*ISO_DATE] {
            if let Some(m) = re.find(text) {
                self.push(
                    ViolationKind::IdentifierLeak,
                    location.clone(),
                    format!("date {:?}", m.as_str()),
                );
            }
        }
        let hits: Vec<String> = self
            .identifiers
            .iter()
            .filter(|(_, re)| re.is_match(text))
            .map(|(p, _)| p.clone())
            .collect();
        for phrase in hits {
            self.push(
                ViolationKind::IdentifierLeak,
                location.clone(),
                format!("identifier {phrase:?}"),
            );
        }
        if clinical {
            let hits: Vec<String> = self
                .comparisons
                .iter()
                .filter(|(_, re)| re.is_match(text))
                .map(|(p, _)| p.clone())
                .collect();
            for phrase in hits {
                self.push(
                    ViolationKind::HistoricalComparison,
                    location.clone(),
                    format!("reference to a previous study ({phrase:?})"),
                );
            }
        }
    }
}

fn section(kind: SectionKind) -> Location {
    Location {
        section: kind.header().to_string(),
        category: None,
        index: None,
    }
}

/// Checks a report against the structured-reporting content rules.
///
/// Returns an empty list when the report is compliant.
pub fn validate_desiderata(report: &StructuredReport, config: &ValidationConfig) -> Vec<Violation> {
    let mut checker = Checker::new(config);

    for kind in SectionKind::ALL {
        if let Some(text) = report.free_text(kind) {
            checker.scan(text, section(kind), false);
        }
    }

    if let Some(groups) = &report.findings {
        if groups.is_empty() {
            checker.push(
                ViolationKind::EmptySection,
                section(SectionKind::Findings),
                "Findings header without any anatomical category".into(),
            );
        }
        let mut seen = BTreeSet::<AnatomicCategory>::new();
        for group in groups {
            let header = group.category.header();
            if !seen.insert(group.category) {
                checker.push(
                    ViolationKind::NonCanonicalHeader,
                    Location {
                        category: Some(header.into()),
                        ..section(SectionKind::Findings)
                    },
                    format!("category {header:?} listed more than once"),
                );
            }
            if group.observations.is_empty() {
                checker.push(
                    ViolationKind::EmptySection,
                    Location {
                        category: Some(header.into()),
                        ..section(SectionKind::Findings)
                    },
                    format!("category {header:?} has no observations"),
                );
            }
            for (index, obs) in group.observations.iter().enumerate() {
                let location = Location {
                    section: SectionKind::Findings.header().into(),
                    category: Some(header.into()),
                    index: Some(index),
                };
                checker.scan(obs.text(), location, true);
            }
        }
    }

    if let Some(items) = &report.impression {
        if items.is_empty() {
            checker.push(
                ViolationKind::EmptySection,
                section(SectionKind::Impression),
                "Impression header without numbered items".into(),
            );
        }
        for (pos, item) in items.iter().enumerate() {
            let expected = pos as u32 + 1;
            if item.rank() != expected {
                checker.push(
                    ViolationKind::ImpressionNumbering,
                    Location {
                        index: Some(item.rank() as usize),
                        ..section(SectionKind::Impression)
                    },
                    format!("impression item {} should be numbered {expected}", item.rank()),
                );
            }
            let location = Location {
                index: Some(item.rank() as usize),
                ..section(SectionKind::Impression)
            };
            checker.scan(item.text(), location, true);
        }
    }

    checker.out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::report::{parse_report, ImpressionItem, ParseMode};

    fn kinds(text: &str, config: &ValidationConfig) -> Vec<ViolationKind> {
        let report = parse_report(text, ParseMode::Strict).unwrap().report;
        validate_desiderata(&report, config)
            .into_iter()
            .map(|v| v.kind)
            .collect()
    }

    #[test]
    fn compliant_report_has_no_violations() {
        let text = "Exam Type: Chest radiograph\nFindings:\nPleura:\n- No effusion.\nImpression:\n1. No acute process.";
        assert!(kinds(text, &ValidationConfig::default()).is_empty());
    }

    #[test]
    fn dates_leak_identifiers() {
        let text = "Impression:\n1. Seen on 03/14/2021";
        assert_eq!(
            kinds(text, &ValidationConfig::default()),
            vec![ViolationKind::IdentifierLeak]
        );
        let text = "History: Admitted 2021-03-14.";
        assert_eq!(
            kinds(text, &ValidationConfig::default()),
            vec![ViolationKind::IdentifierLeak]
        );
    }

    #[test]
    fn lexicon_names_leak_identifiers() {
        let config = ValidationConfig {
            identifier_lexicon: vec!["Dr. Smith".into(), "General Hospital".into()],
            ..Default::default()
        };
        let text = "Comparison: outside films from general hospital.\nImpression:\n1. Discussed with Dr. Smith.";
        assert_eq!(
            kinds(text, &config),
            vec![ViolationKind::IdentifierLeak, ViolationKind::IdentifierLeak]
        );
        // Word boundaries: "Smithson" is not "Smith".
        let config = ValidationConfig {
            identifier_lexicon: vec!["Smith".into()],
            ..Default::default()
        };
        assert!(kinds("Impression:\n1. Smithson fracture.", &config).is_empty());
    }

    #[test]
    fn comparison_phrases_only_in_clinical_sections() {
        let phrases = [
            "Unchanged from prior study.",
            "Effusion again seen.",
            "Compared to prior, larger.",
            "Opacity previously seen has resolved.",
        ];
        for phrase in phrases {
            let text = format!("Findings:\nPleura:\n- {phrase}");
            assert_eq!(
                kinds(&text, &ValidationConfig::default()),
                vec![ViolationKind::HistoricalComparison],
                "{phrase}"
            );
        }
        // The Comparison section is where prior studies belong.
        assert!(kinds(
            "Comparison: Compared to prior from last week.",
            &ValidationConfig::default()
        )
        .is_empty());
        assert!(kinds(
            "Impression:\n1. Stable appearance of the heart.",
            &ValidationConfig::default()
        )
        .is_empty());
    }

    #[test]
    fn empty_sections_are_violations() {
        assert_eq!(
            kinds("Findings:\nImpression:\n1. a", &ValidationConfig::default()),
            vec![ViolationKind::EmptySection]
        );
        assert_eq!(
            kinds("Findings:\nPleura:\nImpression:", &ValidationConfig::default()),
            vec![ViolationKind::EmptySection, ViolationKind::EmptySection]
        );
    }

    #[test]
    fn hand_built_reports_are_rechecked() {
        let mut report = StructuredReport::default();
        report.impression = Some(vec![
            ImpressionItem::new(1, "a").unwrap(),
            ImpressionItem::new(3, "b").unwrap(),
        ]);
        report.add_findings(AnatomicCategory::Pleura, &["x"]).unwrap();
        let dup = report.findings.as_ref().unwrap()[0].clone();
        report.findings.as_mut().unwrap().push(dup);
        let found: Vec<ViolationKind> = validate_desiderata(&report, &ValidationConfig::default())
            .into_iter()
            .map(|v| v.kind)
            .collect();
        assert_eq!(
            found,
            vec![ViolationKind::NonCanonicalHeader, ViolationKind::ImpressionNumbering]
        );
    }
}
