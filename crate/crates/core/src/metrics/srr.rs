//! Report-level scoring from utterance labels.
//!
//! Every findings category and the impression form the sections of a report.
//! Scoring builds multilabel samples from the sections of each
//! (generated, reference) pair and hands them to [`MultilabelConfusion`].
//!
//! A section present on one side only yields samples whose missing side
//! holds a sentinel class naming the section. Such samples never overlap, so
//! they score 0 in every averaging mode, and the sentinel's support makes a
//! spurious section count against weighted averages too.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::Serialize;

use super::{AlignmentMode, AverageMode, MetricsError, MultilabelConfusion, Prf};
use crate::labeling::{label_grouped, Labeler};
use crate::report::{AnatomicCategory, StructuredReport};
use crate::taxonomy::{ClassLabel, LabelSet, LabelSpace, Taxonomy};
use crate::utterance::{extract_utterances, Origin};

/// A class of a scoring sample.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ScoredClass {
    Label(ClassLabel),
    /// Stands in for a section that one side does not have.
    MissingSection(String),
}

impl fmt::Display for ScoredClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScoredClass::Label(label) => label.fmt(f),
            ScoredClass::MissingSection(section) => write!(f, "[missing section: {section}]"),
        }
    }
}

impl Serialize for ScoredClass {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

/// Utterance labels of one report, grouped by section in document order.
/// A section is present iff it has a key (findings) or at least one item
/// (impression).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LabeledReport {
    pub findings: BTreeMap<AnatomicCategory, Vec<LabelSet>>,
    pub impression: Vec<LabelSet>,
}

impl LabeledReport {
    /// `labels` follows [`extract_utterances`] order.
    pub fn new(report: &StructuredReport, labels: Vec<LabelSet>) -> Result<Self, MetricsError> {
        let utterances = extract_utterances("", report);
        if utterances.len() != labels.len() {
            return Err(MetricsError::LabelCountMismatch {
                expected: utterances.len(),
                found: labels.len(),
            });
        }
        let mut out = LabeledReport::default();
        for category in report.categories() {
            out.findings.insert(category, Vec::new());
        }
        for (utt, set) in utterances.into_iter().zip(labels) {
            match utt.origin {
                Origin::Finding { category, .. } => {
                    out.findings.entry(category).or_default().push(set)
                }
                Origin::Impression { .. } => out.impression.push(set),
            }
        }
        Ok(out)
    }

    pub fn categories(&self) -> BTreeSet<AnatomicCategory> {
        self.findings.keys().copied().collect()
    }

    fn sections(&self) -> BTreeMap<Section, &[LabelSet]> {
        let mut out: BTreeMap<Section, &[LabelSet]> = self
            .findings
            .iter()
            .map(|(cat, sets)| (Section::Findings(*cat), sets.as_slice()))
            .collect();
        if !self.impression.is_empty() {
            out.insert(Section::Impression, &self.impression);
        }
        out
    }
}

/// Labels the utterances of many `(study_id, report)` pairs, one labeler
/// call per report.
pub fn label_reports(
    reports: &[(&str, &StructuredReport)],
    labeler: &dyn Labeler,
    taxonomy: &Taxonomy,
    workers: usize,
) -> Result<Vec<LabeledReport>, MetricsError> {
    let per_report: Vec<_> = reports
        .iter()
        .map(|(id, r)| extract_utterances(id, r))
        .collect();
    let labels = label_grouped(labeler, &per_report, taxonomy, workers)?;
    reports
        .iter()
        .zip(labels)
        .map(|((_, report), labels)| LabeledReport::new(report, labels))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Section {
    Findings(AnatomicCategory),
    Impression,
}

impl Section {
    fn name(self) -> &'static str {
        match self {
            Section::Findings(cat) => cat.header(),
            Section::Impression => "Impression",
        }
    }
}

type Sample = BTreeSet<ScoredClass>;

fn project(set: &LabelSet, taxonomy: &Taxonomy, space: LabelSpace) -> Result<Sample, MetricsError> {
    Ok(taxonomy
        .project(set, space)?
        .into_iter()
        .map(ScoredClass::Label)
        .collect())
}

fn pooled(sets: &[LabelSet], taxonomy: &Taxonomy, space: LabelSpace) -> Result<Sample, MetricsError> {
    let mut out = Sample::new();
    for set in sets {
        out.extend(project(set, taxonomy, space)?);
    }
    Ok(out)
}

#[derive(Default)]
struct Samples {
    pred: Vec<Sample>,
    reference: Vec<Sample>,
}

impl Samples {
    fn push(&mut self, pred: Sample, reference: Sample) {
        self.pred.push(pred);
        self.reference.push(reference);
    }

    fn add_section(
        &mut self,
        section: Section,
        generated: Option<&[LabelSet]>,
        reference: Option<&[LabelSet]>,
        taxonomy: &Taxonomy,
        space: LabelSpace,
        alignment: AlignmentMode,
    ) -> Result<(), MetricsError> {
        let missing = || Sample::from([ScoredClass::MissingSection(section.name().to_string())]);
        match (generated, reference, alignment) {
            (None, None, _) => {}
            (Some(g), Some(r), AlignmentMode::Unaligned) => {
                self.push(pooled(g, taxonomy, space)?, pooled(r, taxonomy, space)?)
            }
            (Some(g), Some(r), AlignmentMode::Aligned) => {
                for i in 0..g.len().max(r.len()) {
                    let side = |sets: &[LabelSet]| match sets.get(i) {
                        Some(set) => project(set, taxonomy, space),
                        None => Ok(Sample::new()),
                    };
                    self.push(side(g)?, side(r)?);
                }
            }
            (Some(g), None, AlignmentMode::Unaligned) => {
                self.push(pooled(g, taxonomy, space)?, missing())
            }
            (None, Some(r), AlignmentMode::Unaligned) => {
                self.push(missing(), pooled(r, taxonomy, space)?)
            }
            (Some(g), None, AlignmentMode::Aligned) => {
                for set in g.iter().chain(g.is_empty().then_some(&LabelSet::new())) {
                    self.push(project(set, taxonomy, space)?, missing());
                }
            }
            (None, Some(r), AlignmentMode::Aligned) => {
                for set in r.iter().chain(r.is_empty().then_some(&LabelSet::new())) {
                    self.push(missing(), project(set, taxonomy, space)?);
                }
            }
        }
        Ok(())
    }

    fn confusion(&self) -> MultilabelConfusion<ScoredClass> {
        MultilabelConfusion::new(&self.pred, &self.reference).expect("paired samples")
    }
}

fn check_lengths<T, U>(a: &[T], b: &[U]) -> Result<(), MetricsError> {
    if a.len() != b.len() {
        return Err(MetricsError::LengthMismatch {
            pred: a.len(),
            reference: b.len(),
        });
    }
    Ok(())
}

/// F1 scores of a batch of report pairs in one label space.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SrrScores {
    pub space: LabelSpace,
    pub alignment: AlignmentMode,
    pub by_mode: BTreeMap<AverageMode, Prf>,
    pub per_class: BTreeMap<String, Prf>,
    /// Number of scored samples.
    pub samples: usize,
}

impl SrrScores {
    pub fn get(&self, mode: AverageMode) -> Prf {
        self.by_mode[&mode]
    }
}

/// Scores generated reports against references from their utterance labels.
///
/// Unaligned: each section's utterance labels are pooled into one sample per
/// side. Aligned: utterances are paired by position within a section, and a
/// position present on one side only pairs with the empty set. Sections that
/// exist on one side only contribute zero-scoring samples.
pub fn f1_srr(
    generated: &[LabeledReport],
    reference: &[LabeledReport],
    taxonomy: &Taxonomy,
    space: LabelSpace,
    alignment: AlignmentMode,
) -> Result<SrrScores, MetricsError> {
    check_lengths(generated, reference)?;
    let mut samples = Samples::default();
    for (g, r) in generated.iter().zip(reference) {
        let (gs, rs) = (g.sections(), r.sections());
        let keys: BTreeSet<Section> = gs.keys().chain(rs.keys()).copied().collect();
        for key in keys {
            samples.add_section(
                key,
                gs.get(&key).copied(),
                rs.get(&key).copied(),
                taxonomy,
                space,
                alignment,
            )?;
        }
    }
    let confusion = samples.confusion();
    Ok(SrrScores {
        space,
        alignment,
        by_mode: confusion.scores(),
        per_class: confusion
            .per_class
            .iter()
            .map(|(class, counts)| (class.to_string(), counts.prf()))
            .collect(),
        samples: samples.pred.len(),
    })
}

/// Weighted-average unaligned scores restricted to each findings category.
/// Categories absent from every pair are omitted.
pub fn per_organ_breakdown(
    generated: &[LabeledReport],
    reference: &[LabeledReport],
    taxonomy: &Taxonomy,
    space: LabelSpace,
) -> Result<BTreeMap<AnatomicCategory, Prf>, MetricsError> {
    check_lengths(generated, reference)?;
    let mut out = BTreeMap::new();
    for category in AnatomicCategory::ALL {
        let mut samples = Samples::default();
        for (g, r) in generated.iter().zip(reference) {
            samples.add_section(
                Section::Findings(category),
                g.findings.get(&category).map(Vec::as_slice),
                r.findings.get(&category).map(Vec::as_slice),
                taxonomy,
                space,
                AlignmentMode::Unaligned,
            )?;
        }
        if !samples.pred.is_empty() {
            out.insert(category, samples.confusion().score(AverageMode::Weighted));
        }
    }
    Ok(out)
}

/// Each report's set of findings categories is one sample over the eight
/// category classes.
pub fn category_f1(
    generated: &[StructuredReport],
    reference: &[StructuredReport],
    mode: AverageMode,
) -> Result<Prf, MetricsError> {
    check_lengths(generated, reference)?;
    let sets = |reports: &[StructuredReport]| -> Vec<BTreeSet<AnatomicCategory>> {
        reports
            .iter()
            .map(|r| r.categories().into_iter().collect())
            .collect()
    };
    super::multilabel_prf(&sets(generated), &sets(reference), mode)
}
