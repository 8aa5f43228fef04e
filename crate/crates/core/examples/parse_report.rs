//! Parses a structured report strictly, repairs a messy one leniently and
//! checks both against the writing rules.

use srrg::report::{parse_report, render_report, ParseMode};
use srrg::validate::{validate_desiderata, ValidationConfig};

const CLEAN: &str = "\
Exam Type: Chest radiograph, two views.
Findings:
Lungs and Airways:
- Mild bibasilar atelectasis.
Pleura:
- No pleural effusion.
Impression:
1. Mild bibasilar atelectasis.";

const MESSY: &str = "\
FINDINGS:
Lungs:
* Patchy right lower lobe opacity, unchanged from prior.
Impression:
2. Possible pneumonia.";

fn main() {
    let clean = parse_report(CLEAN, ParseMode::Strict).expect("canonical text parses strictly");
    println!("categories: {:?}", clean.report.categories());
    assert_eq!(render_report(&clean.report), CLEAN);

    match parse_report(MESSY, ParseMode::Strict) {
        Ok(_) => println!("strict parse unexpectedly succeeded"),
        Err(issues) => println!("strict parse rejected {} line(s)", issues.len()),
    }
    let repaired = parse_report(MESSY, ParseMode::Lenient).expect("lenient parse recovers");
    for issue in &repaired.issues {
        println!("repair: {issue}");
    }
    println!("\n{}\n", render_report(&repaired.report));

    for violation in validate_desiderata(&repaired.report, &ValidationConfig::default()) {
        println!("violation {:?}: {}", violation.kind, violation.message);
    }
}
