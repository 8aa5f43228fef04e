//! Imports studies, assigns splits and saves versioned reviews with
//! optimistic concurrency.

use std::collections::BTreeMap;

use srrg::store::{CorpusStore, ImportFormat, ReviewDraft, Split, StoreError};

const STUDIES: &str = r#"{"study_id":"a1","original_text":"Small right effusion.","structured_text":"Findings:\nPleura:\n- Small right pleural effusion.\nImpression:\n1. Small right pleural effusion."}
{"study_id":"a2","original_text":"Clear lungs.","structured_text":"Findings:\nLungs and Airways:\n- Clear lungs.\nImpression:\n1. No acute process."}
not a study
"#;

fn main() -> Result<(), StoreError> {
    let dir = tempfile::tempdir().expect("temp dir");
    let input = dir.path().join("studies.jsonl");
    std::fs::write(&input, STUDIES).expect("write input");

    let store = CorpusStore::open(dir.path().join("corpus"))?;
    let report = store.import_studies(&input, ImportFormat::Jsonl)?;
    println!("imported {}, rejected {}", report.imported, report.errors.len());
    for error in &report.errors {
        println!("  line {}: {}", error.line, error.message);
    }

    let manifest = BTreeMap::from([("a1".to_string(), Split::TestReviewed), ("a2".to_string(), Split::Train)]);
    store.assign_splits(&manifest)?;
    println!("splits: {:?}", store.split_counts());

    let draft = |text: &str| ReviewDraft {
        study_id: "a1".into(),
        reviewer: "r1".into(),
        edited_text: text.into(),
        label_corrections: Vec::new(),
    };
    let first = store.save_review(draft("Findings:\nPleura:\n- Moderate right pleural effusion."), 0)?;
    println!("saved a1 v{}", first.version);
    match store.save_review(draft("a stale edit"), 0) {
        Err(StoreError::VersionConflict { .. }) => println!("stale write rejected"),
        other => println!("unexpected: {other:?}"),
    }

    // A reopened store sees everything that was acknowledged.
    drop(store);
    let reopened = CorpusStore::open(dir.path().join("corpus"))?;
    println!("a1 is at v{} after reopening", reopened.current_version("a1"));
    Ok(())
}
