//! Labels utterances with three scripted LLM voters and a 2-of-3 vote, and
//! compares against the keyword labeler.

use std::sync::Arc;

use srrg::labeling::{
    label_batched, render_disease_answer, FnClient, KeywordLabeler, LlmClient, LlmLabeler,
};
use srrg::taxonomy::{LabelSet, Status, Taxonomy};
use srrg::utterance::{Origin, Utterance};

fn voter(name: &str, answers: Vec<LabelSet>, findings: Vec<String>) -> Arc<dyn LlmClient> {
    let response = render_disease_answer(&findings, &answers);
    Arc::new(FnClient::new(name, move |_prompt: &str| Ok(response.clone())))
}

fn main() {
    let tax = Taxonomy::bundled();
    let texts = [
        "Right perihilar consolidation, which may be edema or pneumonia.",
        "No pleural effusion.",
    ];
    let utterances: Vec<Utterance> = texts
        .iter()
        .enumerate()
        .map(|(i, t)| Utterance {
            study_id: "demo".into(),
            origin: Origin::Impression { rank: i as u32 + 1 },
            text: t.to_string(),
        })
        .collect();
    let findings: Vec<String> = texts.iter().map(|t| t.to_string()).collect();

    let set = |items: &[(&str, Status)]| -> LabelSet { items.iter().copied().collect() };
    let no_effusion = set(&[("Simple pleural effusion", Status::Absent)]);
    let voters = vec![
        voter("a", vec![set(&[("Edema", Status::Uncertain), ("Pneumonia", Status::Uncertain)]), no_effusion.clone()], findings.clone()),
        voter("b", vec![set(&[("Edema", Status::Present)]), no_effusion.clone()], findings.clone()),
        voter("c", vec![set(&[("Pneumonia", Status::Uncertain)]), set(&[("No Finding", Status::Present)])], findings),
    ];
    let llm = LlmLabeler::new(voters, tax.clone()).expect("three voters");
    let keyword = KeywordLabeler::bundled(&tax).expect("bundled lexicon");

    let voted = label_batched(&llm, &utterances, &tax, 1, 16).expect("scripted answers parse");
    let keyed = label_batched(&keyword, &utterances, &tax, 1, 16).expect("keyword labeling");
    for ((utt, v), k) in utterances.iter().zip(&voted).zip(&keyed) {
        println!("{}", utt.text);
        println!("  consensus: {}", render(v));
        println!("  keyword:   {}", render(k));
    }
}

fn render(set: &LabelSet) -> String {
    set.iter().map(|l| format!("{} ({})", l.disease, l.status)).collect::<Vec<_>>().join(", ")
}
