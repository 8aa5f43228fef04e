//! Evaluation metrics.
//!
//! - [`multilabel_prf`]: precision/recall/F1 over label-set samples with
//!   micro, macro, weighted and samples averaging
//! - [`f1_srr`], [`category_f1`], [`per_organ_breakdown`]: report-level
//!   scoring from utterance labels
//! - [`bleu`], [`corpus_bleu`], [`rouge_l`]: n-gram and LCS text overlap
//! - [`ScoreReport`]: tabulation and JSON/CSV export

mod export;
mod srr;
mod text;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use export::{merge_external_scores, ScoreReport, ScoreRow, BUILTIN_SCORE_NAMES};
pub use srr::{
    category_f1, f1_srr, label_reports, per_organ_breakdown, LabeledReport, ScoredClass,
    SrrScores,
};
pub use text::{bleu, corpus_bleu, rouge_l};

use crate::labeling::LabelingError;
use crate::taxonomy::TaxonomyError;

#[derive(Debug, thiserror::Error)]
pub enum MetricsError {
    #[error("{pred} predicted samples but {reference} reference samples")]
    LengthMismatch { pred: usize, reference: usize },
    #[error("no reference text given")]
    EmptyReference,
    #[error("score name {0:?} is already taken")]
    NameCollision(String),
    #[error("labeled report has {found} label sets for {expected} utterances")]
    LabelCountMismatch { expected: usize, found: usize },
    #[error(transparent)]
    Labeling(#[from] LabelingError),
    #[error(transparent)]
    Taxonomy(#[from] TaxonomyError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AverageMode {
    Micro,
    Macro,
    Weighted,
    Samples,
}

impl AverageMode {
    pub const ALL: [AverageMode; 4] = [
        AverageMode::Micro,
        AverageMode::Macro,
        AverageMode::Weighted,
        AverageMode::Samples,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AverageMode::Micro => "micro",
            AverageMode::Macro => "macro",
            AverageMode::Weighted => "weighted",
            AverageMode::Samples => "samples",
        }
    }
}

impl fmt::Display for AverageMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AverageMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|m| m.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| format!("unknown averaging mode {s:?}"))
    }
}

impl Serialize for AverageMode {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for AverageMode {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        String::deserialize(deserializer)?
            .parse()
            .map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub enum AlignmentMode {
    Aligned,
    #[default]
    Unaligned,
}

impl AlignmentMode {
    pub fn as_str(self) -> &'static str {
        match self {
            AlignmentMode::Aligned => "aligned",
            AlignmentMode::Unaligned => "unaligned",
        }
    }
}

impl fmt::Display for AlignmentMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AlignmentMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "aligned" => Ok(AlignmentMode::Aligned),
            "unaligned" => Ok(AlignmentMode::Unaligned),
            _ => Err(format!("unknown alignment {s:?}")),
        }
    }
}

impl Serialize for AlignmentMode {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.as_str())
    }
}

/// Precision, recall and F1 in `[0, 1]`, with the support they were
/// computed on (number of reference labels).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn harmonic(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct ClassCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ClassCounts {
    pub fn support(&self) -> u64 {
        self.tp + self.fn_
    }

    pub fn prf(&self) -> Prf {
        let precision = ratio(self.tp, self.tp + self.fp);
        let recall = ratio(self.tp, self.tp + self.fn_);
        Prf {
            precision,
            recall,
            f1: harmonic(precision, recall),
            support: self.support(),
        }
    }
}

/// Per-class and per-sample counts of a multilabel prediction.
///
/// The class universe is every class seen on either side.
#[derive(Debug, Clone, PartialEq)]
pub struct MultilabelConfusion<C: Ord> {
    pub per_class: BTreeMap<C, ClassCounts>,
    /// (|pred|, |ref|, |pred ∩ ref|) per sample.
    pub per_sample: Vec<(u64, u64, u64)>,
}

impl<C: Ord + Clone> MultilabelConfusion<C> {
    pub fn new(pred: &[BTreeSet<C>], reference: &[BTreeSet<C>]) -> Result<Self, MetricsError> {
        if pred.len() != reference.len() {
            return Err(MetricsError::LengthMismatch {
                pred: pred.len(),
                reference: reference.len(),
            });
        }
        let mut per_class: BTreeMap<C, ClassCounts> = BTreeMap::new();
        let mut per_sample = Vec::with_capacity(pred.len());
        for (p, r) in pred.iter().zip(reference) {
            let mut hits = 0;
            for c in p {
                let counts = per_class.entry(c.clone()).or_default();
                if r.contains(c) {
                    counts.tp += 1;
                    hits += 1;
                } else {
                    counts.fp += 1;
                }
            }
            for c in r.difference(p) {
                per_class.entry(c.clone()).or_default().fn_ += 1;
            }
            per_sample.push((p.len() as u64, r.len() as u64, hits));
        }
        Ok(MultilabelConfusion {
            per_class,
            per_sample,
        })
    }

    pub fn support(&self) -> u64 {
        self.per_class.values().map(ClassCounts::support).sum()
    }

    /// Averaged scores. A sample that is empty on both sides scores 1 under
    /// `Samples` averaging; with no samples or no classes every score is 0.
    pub fn score(&self, mode: AverageMode) -> Prf {
        let support = self.support();
        let (precision, recall, f1) = match mode {
            AverageMode::Micro => {
                let total = self
                    .per_class
                    .values()
                    .fold(ClassCounts::default(), |acc, c| ClassCounts {
                        tp: acc.tp + c.tp,
                        fp: acc.fp + c.fp,
                        fn_: acc.fn_ + c.fn_,
                    })
                    .prf();
                (total.precision, total.recall, total.f1)
            }
            AverageMode::Macro => {
                let n = self.per_class.len();
                if n == 0 {
                    (0.0, 0.0, 0.0)
                } else {
                    let sum = self.per_class.values().map(ClassCounts::prf).fold(
                        (0.0, 0.0, 0.0),
                        |acc, s| (acc.0 + s.precision, acc.1 + s.recall, acc.2 + s.f1),
                    );
                    (sum.0 / n as f64, sum.1 / n as f64, sum.2 / n as f64)
                }
            }
            AverageMode::Weighted => {
                if support == 0 {
                    (0.0, 0.0, 0.0)
                } else {
                    let sum = self.per_class.values().fold((0.0, 0.0, 0.0), |acc, c| {
                        let s = c.prf();
                        let w = c.support() as f64;
                        (
                            acc.0 + w * s.precision,
                            acc.1 + w * s.recall,
                            acc.2 + w * s.f1,
                        )
                    });
                    let w = support as f64;
                    (sum.0 / w, sum.1 / w, sum.2 / w)
                }
            }
            AverageMode::Samples => {
                let n = self.per_sample.len();
                if n == 0 {
                    (0.0, 0.0, 0.0)
                } else {
                    let sum = self.per_sample.iter().fold((0.0, 0.0, 0.0), |acc, &(p, r, hit)| {
                        let (sp, sr, sf) = if p == 0 && r == 0 {
                            (1.0, 1.0, 1.0)
                        } else {
                            (ratio(hit, p), ratio(hit, r), ratio(2 * hit, p + r))
                        };
                        (acc.0 + sp, acc.1 + sr, acc.2 + sf)
                    });
                    (sum.0 / n as f64, sum.1 / n as f64, sum.2 / n as f64)
                }
            }
        };
        Prf {
            precision,
            recall,
            f1,
            support,
        }
    }

    pub fn scores(&self) -> BTreeMap<AverageMode, Prf> {
        AverageMode::ALL.into_iter().map(|m| (m, self.score(m))).collect()
    }
}

/// Multilabel precision, recall and F1 of `pred` against `reference`,
/// positionally paired.
pub fn multilabel_prf<C: Ord + Clone>(
    pred: &[BTreeSet<C>],
    reference: &[BTreeSet<C>],
    mode: AverageMode,
) -> Result<Prf, MetricsError> {
    Ok(MultilabelConfusion::new(pred, reference)?.score(mode))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sets(items: &[&[&'static str]]) -> Vec<BTreeSet<&'static str>> {
        items.iter().map(|s| s.iter().copied().collect()).collect()
    }

    #[test]
    fn perfect_and_disjoint() {
        let a = sets(&[&["x", "y"], &["z"]]);
        let b = sets(&[&["w"], &["v"]]);
        for mode in AverageMode::ALL {
            let p = multilabel_prf(&a, &a, mode).unwrap();
            assert_eq!((p.precision, p.recall, p.f1), (1.0, 1.0, 1.0), "{mode}");
            let p = multilabel_prf(&a, &b, mode).unwrap();
            assert_eq!((p.precision, p.recall, p.f1), (0.0, 0.0, 0.0), "{mode}");
        }
    }

    #[test]
    fn hand_computed_case() {
        // classes a,b,c; pred/ref per sample
        let pred = sets(&[&["a", "b"], &["a"], &["c"]]);
        let reference = sets(&[&["a"], &["a", "b"], &["b"]]);
        // a: tp2 fp0 fn0; b: tp0 fp1 fn2; c: tp0 fp1 fn0
        let micro = multilabel_prf(&pred, &reference, AverageMode::Micro).unwrap();
        assert!((micro.precision - 0.5).abs() < 1e-12);
        assert!((micro.recall - 0.5).abs() < 1e-12);
        assert_eq!(micro.support, 4);
        let macro_ = multilabel_prf(&pred, &reference, AverageMode::Macro).unwrap();
        assert!((macro_.f1 - 1.0 / 3.0).abs() < 1e-12);
        let weighted = multilabel_prf(&pred, &reference, AverageMode::Weighted).unwrap();
        assert!((weighted.f1 - 0.5).abs() < 1e-12);
        let samples = multilabel_prf(&pred, &reference, AverageMode::Samples).unwrap();
        // sample F1s: 2/3, 2/3, 0
        assert!((samples.f1 - 4.0 / 9.0).abs() < 1e-12);
        assert!((samples.precision - 0.5).abs() < 1e-12);
    }

    #[test]
    fn empty_samples() {
        let e = sets(&[&[]]);
        let s = multilabel_prf(&e, &e, AverageMode::Samples).unwrap();
        assert_eq!(s.f1, 1.0);
        let m = multilabel_prf(&e, &e, AverageMode::Micro).unwrap();
        assert_eq!(m.f1, 0.0);
        assert!(matches!(
            multilabel_prf(&e, &[], AverageMode::Micro),
            Err(MetricsError::LengthMismatch { .. })
        ));
    }
}
