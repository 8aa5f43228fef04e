//! Rewrites a free-text report into the structured format with a scripted
//! model. The first answer breaks the rules, so the prompt is retried with
//! the problems attached.

use std::sync::atomic::{AtomicUsize, Ordering};

use srrg::labeling::{restructure, FnClient};
use srrg::report::render_report;
use srrg::validate::ValidationConfig;

const FREE_TEXT: &str = "PA and lateral chest. Compared to prior, there is a small right pleural \
effusion. Lungs otherwise clear. Heart size normal.";

const FIRST_ANSWER: &str = "Findings:\nPleura:\n- Small right pleural effusion, compared to prior.\nImpression:\n2. Small right pleural effusion.";
const SECOND_ANSWER: &str = "```\nExam Type: Chest radiograph, PA and lateral.\nFindings:\nLungs and Airways:\n- Clear lungs.\nPleura:\n- Small right pleural effusion.\nCardiovascular:\n- Normal heart size.\nImpression:\n1. Small right pleural effusion.\n```";

fn main() {
    let calls = AtomicUsize::new(0);
    let client = FnClient::new("scripted", move |prompt: &str| {
        let n = calls.fetch_add(1, Ordering::SeqCst);
        if n > 0 {
            let lines: Vec<&str> = prompt.lines().collect();
            println!("retry prompt ends with:\n{}\n", lines[lines.len().saturating_sub(3)..].join("\n"));
        }
        Ok(if n == 0 { FIRST_ANSWER } else { SECOND_ANSWER }.to_string())
    });
    let outcome = restructure(FREE_TEXT, &client, &ValidationConfig::default()).expect("client answers");
    println!("attempts: {}, clean: {}", outcome.attempts, outcome.is_clean());
    if let Some(report) = &outcome.report {
        println!("{}", render_report(report));
    }
}
