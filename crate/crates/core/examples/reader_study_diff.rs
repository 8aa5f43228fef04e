//! Word-level edit statistics for radiologist-edited impressions, and label
//! agreement between automatic and corrected labels.

use srrg::taxonomy::{LabelSet, Status};
use srrg::textdiff::{diff_stats, label_consistency, opcodes, review_summary, tokenize, OpKind};

fn main() {
    let pairs = [
        (
            "1. Small right pleural effusion. 2. No pneumothorax.",
            "1. Small right pleural effusion. 2. No pneumothorax.",
        ),
        (
            "1. Mild pulmonary edema. 2. Cardiomegaly.",
            "1. Moderate pulmonary edema. 2. Cardiomegaly, stable.",
        ),
        (
            "1. Right lower lobe opacity concerning for pneumonia.",
            "1. Right lower lobe atelectasis.",
        ),
    ];
    for (original, edited) in &pairs {
        let stats = diff_stats(original, edited);
        println!(
            "ins {} del {} rep {} ratio {:.3}",
            stats.insertions, stats.deletions, stats.replacements, stats.similarity_ratio
        );
        let (a, b) = (tokenize(original), tokenize(edited));
        for op in opcodes(&a, &b).iter().filter(|o| o.kind != OpKind::Equal) {
            println!("  {:?}: {:?} -> {:?}", op.kind, &a[op.a_lo..op.a_hi], &b[op.b_lo..op.b_hi]);
        }
    }
    let summary = review_summary(&pairs).expect("non-empty");
    println!("\n{}\n", summary.listing());

    let set = |items: &[(&str, Status)]| -> LabelSet { items.iter().copied().collect() };
    let auto = vec![set(&[("Edema", Status::Present)]), set(&[("Pneumonia", Status::Uncertain)])];
    let reviewed = vec![set(&[("Edema", Status::Present)]), set(&[("Atelectasis", Status::Present)])];
    let pairs: Vec<(LabelSet, LabelSet)> = auto.into_iter().zip(reviewed).collect();
    let consistency = label_consistency(&pairs, true).expect("non-empty");
    println!("{}", consistency.listing());
}
