//! Scores generated reports against references with F1-SRR in every label
//! space, plus BLEU and ROUGE-L on the impressions.

use srrg::labeling::KeywordLabeler;
use srrg::metrics::{corpus_bleu, f1_srr, label_reports, rouge_l, AlignmentMode, AverageMode};
use srrg::report::{parse_report, ParseMode, StructuredReport};
use srrg::taxonomy::{LabelSpace, Taxonomy};

const GENERATED: [&str; 2] = [
    "Findings:\nLungs and Airways:\n- Mild pulmonary edema.\nPleura:\n- Small left pleural effusion.\nImpression:\n1. Mild pulmonary edema.",
    "Findings:\nCardiovascular:\n- Cardiomegaly.\nImpression:\n1. Cardiomegaly.",
];
const REFERENCE: [&str; 2] = [
    "Findings:\nLungs and Airways:\n- Moderate pulmonary edema.\nImpression:\n1. Moderate pulmonary edema.",
    "Findings:\nCardiovascular:\n- Cardiomegaly.\nLungs and Airways:\n- No pneumothorax.\nImpression:\n1. Cardiomegaly.",
];

fn parse_all(texts: &[&str]) -> Vec<StructuredReport> {
    texts
        .iter()
        .map(|t| parse_report(t, ParseMode::Strict).expect("fixture parses").report)
        .collect()
}

fn main() {
    let tax = Taxonomy::bundled();
    let labeler = KeywordLabeler::bundled(&tax).expect("bundled lexicon");
    let (generated, reference) = (parse_all(&GENERATED), parse_all(&REFERENCE));
    let ids = ["s1", "s2"];
    let g_refs: Vec<(&str, &StructuredReport)> = ids.into_iter().zip(&generated).collect();
    let r_refs: Vec<(&str, &StructuredReport)> = ids.into_iter().zip(&reference).collect();
    let g_labeled = label_reports(&g_refs, &labeler, &tax, 2).expect("labeling");
    let r_labeled = label_reports(&r_refs, &labeler, &tax, 2).expect("labeling");

    for space in LabelSpace::ALL {
        let scores = f1_srr(&g_labeled, &r_labeled, &tax, space, AlignmentMode::Unaligned).expect("same length");
        let row: Vec<String> = AverageMode::ALL
            .into_iter()
            .map(|m| format!("{m} {:.3}", scores.get(m).f1))
            .collect();
        println!("{:<14} {}", space.as_str(), row.join("  "));
    }

    let candidates: Vec<String> = generated.iter().map(StructuredReport::impression_text).collect();
    let references: Vec<Vec<String>> = reference.iter().map(|r| vec![r.impression_text()]).collect();
    let bleu = corpus_bleu(&candidates, &references, 4).expect("one reference each");
    let rouge: f64 = candidates
        .iter()
        .zip(&references)
        .map(|(c, r)| rouge_l(c, &r[0]))
        .sum::<f64>()
        / candidates.len() as f64;
    println!("BLEU {bleu:.2}  ROUGE-L {rouge:.2}");
}
