//! Generators and independent oracles shared by the integration tests.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::Rng;

use srrg::report::{AnatomicCategory, StructuredReport};
use srrg::taxonomy::{LabelSet, LabelSpace, Status, Taxonomy, NO_FINDING};
use srrg::utterance::{extract_utterances, Origin};

const WORDS: &[&str] = &[
    "mild", "stable", "right", "left", "basilar", "opacity", "effusion", "clear", "lungs",
    "heart", "size", "normal", "small", "catheter", "tip", "projects", "over", "atrium",
    "unchanged", "degenerative", "spine", "changes", "interval", "improved", "subsegmental",
    "atelectasis", "lower", "lobe", "with", "and", "the", "of", "is", "are", "moderate",
];

pub fn sentence(rng: &mut StdRng, min: usize, max: usize) -> String {
    let n = rng.gen_range(min..=max);
    let words: Vec<&str> = (0..n).map(|_| *WORDS.choose(rng).unwrap()).collect();
    format!("{}.", words.join(" "))
}

/// A random well-formed report. Free-text sections are single lines so the
/// parse of the rendering equals the report up to category order.
pub fn random_report(rng: &mut StdRng) -> StructuredReport {
    let mut report = StructuredReport::default();
    for slot in [
        &mut report.exam_type,
        &mut report.history,
        &mut report.technique,
        &mut report.comparison,
    ] {
        if rng.gen_bool(0.6) {
            *slot = Some(sentence(rng, 1, 6));
        }
    }
    if rng.gen_bool(0.9) {
        let mut categories = AnatomicCategory::ALL.to_vec();
        categories.shuffle(rng);
        let take = rng.gen_range(1..=4);
        for category in categories.into_iter().take(take) {
            let bullets: Vec<String> = (0..rng.gen_range(1..=3)).map(|_| sentence(rng, 2, 8)).collect();
            report.add_findings(category, &bullets).unwrap();
        }
    }
    if rng.gen_bool(0.9) {
        let items: Vec<String> = (0..rng.gen_range(1..=4)).map(|_| sentence(rng, 2, 10)).collect();
        report.set_impression(&items).unwrap();
    }
    report
}

/// Zero to three leaves with random statuses, or `No Finding`.
pub fn random_labels(rng: &mut StdRng, taxonomy: &Taxonomy) -> LabelSet {
    if rng.gen_bool(0.15) {
        return [(NO_FINDING, Status::Present)].into_iter().collect();
    }
    let leaves: Vec<&str> = taxonomy.leaves().into_iter().filter(|l| *l != NO_FINDING).collect();
    let n = rng.gen_range(0..=3);
    let mut set = LabelSet::new();
    for _ in 0..n {
        let leaf = *leaves.choose(rng).unwrap();
        let status = *Status::ALL.choose(rng).unwrap();
        set.insert(leaf, status);
    }
    set
}

/// Leaves drawn from a small pool so generated pairs overlap often.
pub fn random_labels_narrow(rng: &mut StdRng) -> LabelSet {
    const POOL: [&str; 6] = [
        "Edema",
        "Pneumonia",
        "Atelectasis",
        "Simple pleural effusion",
        "Cardiomegaly",
        "Simple pneumothorax",
    ];
    let mut set = LabelSet::new();
    for _ in 0..rng.gen_range(0..=3) {
        set.insert(*POOL.choose(rng).unwrap(), *Status::ALL.choose(rng).unwrap());
    }
    set
}

/// Leaf to upper label, written out by hand from the disease tree listing.
pub const UPPER_TABLE: [(&str, &str); 54] = [
    ("No Finding", "No Finding"),
    ("Edema", "Diffuse air space opacity"),
    ("Pneumonia", "Consolidation"),
    ("Atelectasis", "Consolidation"),
    ("Aspiration", "Consolidation"),
    ("Lung collapse", "Segmental collapse"),
    ("Perihilar airspace opacity", "Focal air space opacity"),
    ("Air space opacity–multifocal", "Air space opacity"),
    ("Mass/Solitary lung mass", "Solitary masslike opacity"),
    ("Nodule/Solitary lung nodule", "Solitary masslike opacity"),
    ("Cavitating mass with content", "Solitary masslike opacity"),
    ("Cavitating masses", "Multiple masslike opacities"),
    ("Emphysema", "Lung Finding"),
    ("Fibrosis", "Lung Finding"),
    ("Pulmonary congestion", "Lung Finding"),
    ("Hilar lymphadenopathy", "Lung Finding"),
    ("Bronchiectasis", "Lung Finding"),
    ("Simple pneumothorax", "Pneumothorax"),
    ("Loculated pneumothorax", "Pneumothorax"),
    ("Tension pneumothorax", "Pneumothorax"),
    ("Simple pleural effusion", "Pleural Effusion"),
    ("Loculated pleural effusion", "Pleural Effusion"),
    ("Pleural scarring", "Pleural Thickening"),
    ("Hydropneumothorax", "Pleural Finding"),
    ("Pleural Other", "Pleural Finding"),
    ("Cardiomegaly", "Widened Cardiac Silhouette"),
    ("Pericardial effusion", "Widened Cardiac Silhouette"),
    ("Inferior mediastinal mass", "Mediastinal Mass"),
    ("Superior mediastinal mass", "Mediastinal Mass"),
    ("Tortuous Aorta", "Widened aortic contour"),
    ("Calcification of the Aorta", "Vascular Finding"),
    ("Enlarged pulmonary artery", "Vascular Finding"),
    ("Hernia", "Mediastinal Finding"),
    ("Pneumomediastinum", "Mediastinal Finding"),
    ("Tracheal deviation", "Mediastinal Finding"),
    ("Acute humerus fracture", "Fracture"),
    ("Acute rib fracture", "Fracture"),
    ("Acute clavicle fracture", "Fracture"),
    ("Acute scapula fracture", "Fracture"),
    ("Compression fracture", "Fracture"),
    ("Shoulder dislocation", "Musculoskeletal Finding"),
    ("Subcutaneous Emphysema", "Chest wall finding"),
    ("Suboptimal central line", "Support Devices"),
    ("Suboptimal endotracheal tube", "Support Devices"),
    ("Suboptimal nasogastric tube", "Support Devices"),
    ("Suboptimal pulmonary arterial catheter", "Support Devices"),
    ("Pleural tube", "Support Devices"),
    ("PICC line", "Support Devices"),
    ("Port catheter", "Support Devices"),
    ("Pacemaker", "Support Devices"),
    ("Implantable defibrillator", "Support Devices"),
    ("LVAD", "Support Devices"),
    ("Intraaortic balloon pump", "Support Devices"),
    ("Pneumoperitoneum", "Subdiaphragmatic gas"),
];

fn status_name(status: Status) -> &'static str {
    match status {
        Status::Present => "P",
        Status::Uncertain => "U",
        Status::Absent => "A",
    }
}

/// String class of one label under `space`, using [`UPPER_TABLE`].
pub fn oracle_class(disease: &str, status: Status, space: LabelSpace) -> (String, Status) {
    let name = if matches!(space, LabelSpace::Upper | LabelSpace::UpperWithStatus) {
        UPPER_TABLE
            .iter()
            .find(|(leaf, _)| *leaf == disease)
            .map(|(_, upper)| *upper)
            .expect("leaf in table")
    } else {
        disease
    };
    (name.to_string(), status)
}

/// Projects a label set: statuses of diseases sharing a class merge to the
/// most severe one.
pub fn oracle_project(set: &LabelSet, space: LabelSpace) -> BTreeSet<String> {
    let mut merged: BTreeMap<String, Status> = BTreeMap::new();
    for label in set.iter() {
        let (name, status) = oracle_class(&label.disease, label.status, space);
        let slot = merged.entry(name).or_insert(status);
        let rank = |s: Status| match s {
            Status::Absent => 0,
            Status::Uncertain => 1,
            Status::Present => 2,
        };
        if rank(status) > rank(*slot) {
            *slot = status;
        }
    }
    let with_status = matches!(space, LabelSpace::LeavesWithStatus | LabelSpace::UpperWithStatus);
    merged
        .into_iter()
        .map(|(name, status)| {
            if with_status {
                format!("{name}|{}", status_name(status))
            } else {
                name
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OraclePrf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn div(a: f64, b: f64) -> f64 {
    if b == 0.0 {
        0.0
    } else {
        a / b
    }
}

fn f1_of(p: f64, r: f64) -> f64 {
    div(2.0 * p * r, p + r)
}

/// Brute-force multilabel scores by indicator-matrix enumeration. The class
/// universe is every class appearing on either side. Returns
/// `[micro, macro, weighted, samples]`.
pub fn oracle_prf(pred: &[BTreeSet<String>], reference: &[BTreeSet<String>]) -> [OraclePrf; 4] {
    let universe: Vec<&String> = pred
        .iter()
        .chain(reference)
        .flatten()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let n = pred.len();
    let y_pred: Vec<Vec<bool>> = pred.iter().map(|s| universe.iter().map(|c| s.contains(*c)).collect()).collect();
    let y_ref: Vec<Vec<bool>> = reference.iter().map(|s| universe.iter().map(|c| s.contains(*c)).collect()).collect();

    let mut per_class = Vec::new();
    for j in 0..universe.len() {
        let (mut tp, mut fp, mut fn_) = (0.0, 0.0, 0.0);
        for i in 0..n {
            match (y_pred[i][j], y_ref[i][j]) {
                (true, true) => tp += 1.0,
                (true, false) => fp += 1.0,
                (false, true) => fn_ += 1.0,
                (false, false) => {}
            }
        }
        per_class.push((tp, fp, fn_));
    }
    let (tp, fp, fn_) = per_class
        .iter()
        .fold((0.0, 0.0, 0.0), |a, c| (a.0 + c.0, a.1 + c.1, a.2 + c.2));
    let (mp, mr) = (div(tp, tp + fp), div(tp, tp + fn_));
    let micro = OraclePrf { precision: mp, recall: mr, f1: f1_of(mp, mr) };

    let k = per_class.len() as f64;
    let mut macro_ = OraclePrf { precision: 0.0, recall: 0.0, f1: 0.0 };
    let mut weighted = macro_;
    let total_support: f64 = per_class.iter().map(|c| c.0 + c.2).sum();
    for &(tp, fp, fn_) in &per_class {
        let (p, r) = (div(tp, tp + fp), div(tp, tp + fn_));
        let f = f1_of(p, r);
        macro_.precision += div(p, k);
        macro_.recall += div(r, k);
        macro_.f1 += div(f, k);
        let w = div(tp + fn_, total_support);
        weighted.precision += w * p;
        weighted.recall += w * r;
        weighted.f1 += w * f;
    }

    let mut samples = OraclePrf { precision: 0.0, recall: 0.0, f1: 0.0 };
    for i in 0..n {
        let p_count = y_pred[i].iter().filter(|x| **x).count() as f64;
        let r_count = y_ref[i].iter().filter(|x| **x).count() as f64;
        let hits = (0..universe.len()).filter(|&j| y_pred[i][j] && y_ref[i][j]).count() as f64;
        let (p, r, f) = if p_count == 0.0 && r_count == 0.0 {
            (1.0, 1.0, 1.0)
        } else {
            (div(hits, p_count), div(hits, r_count), div(2.0 * hits, p_count + r_count))
        };
        samples.precision += div(p, n as f64);
        samples.recall += div(r, n as f64);
        samples.f1 += div(f, n as f64);
    }
    [micro, macro_, weighted, samples]
}

/// Section name to the labels of its utterances, in document order.
pub fn sections_of(report: &StructuredReport, labels: &[LabelSet]) -> BTreeMap<String, Vec<LabelSet>> {
    let mut out: BTreeMap<String, Vec<LabelSet>> = BTreeMap::new();
    for category in report.categories() {
        out.entry(category.header().to_string()).or_default();
    }
    for (utt, set) in extract_utterances("x", report).iter().zip(labels) {
        let key = match utt.origin {
            Origin::Finding { category, .. } => category.header().to_string(),
            Origin::Impression { .. } => "Impression".to_string(),
        };
        out.entry(key).or_default().push(set.clone());
    }
    out
}

/// Unaligned set-pooling oracle: one sample per section per report pair; a
/// section on one side only pairs with a sentinel class on the other side.
pub fn oracle_unaligned(
    pairs: &[(LabeledSide, LabeledSide)],
    space: LabelSpace,
) -> [OraclePrf; 4] {
    let mut pred = Vec::new();
    let mut reference = Vec::new();
    for ((gr, gl), (rr, rl)) in pairs {
        let (gs, rs) = (sections_of(gr, gl), sections_of(rr, rl));
        let keys: BTreeSet<&String> = gs.keys().chain(rs.keys()).collect();
        let pool = |sets: &Vec<LabelSet>| -> BTreeSet<String> {
            sets.iter().flat_map(|s| oracle_project(s, space)).collect()
        };
        for key in keys {
            let sentinel = BTreeSet::from([format!("<missing {key}>")]);
            pred.push(gs.get(key).map(pool).unwrap_or_else(|| sentinel.clone()));
            reference.push(rs.get(key).map(pool).unwrap_or(sentinel));
        }
    }
    oracle_prf(&pred, &reference)
}

pub type LabeledSide = (StructuredReport, Vec<LabelSet>);

pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

/// Re-serializes JSON with object keys sorted at every level.
pub fn canonical_json(text: &str) -> String {
    fn sort(v: serde_json::Value) -> serde_json::Value {
        match v {
            serde_json::Value::Object(map) => {
                let sorted: BTreeMap<String, serde_json::Value> =
                    map.into_iter().map(|(k, v)| (k, sort(v))).collect();
                serde_json::Value::Object(sorted.into_iter().collect())
            }
            serde_json::Value::Array(items) => serde_json::Value::Array(items.into_iter().map(sort).collect()),
            other => other,
        }
    }
    let value: serde_json::Value = serde_json::from_str(text).expect("valid json");
    serde_json::to_string(&sort(value)).unwrap()
}

/// Minimal blocking HTTP/1.1 client: returns the status code and body.
pub fn http(addr: &str, method: &str, path: &str, body: Option<&str>) -> std::io::Result<(u16, String)> {
    use std::io::{Read, Write};
    let mut stream = std::net::TcpStream::connect(addr)?;
    stream.set_read_timeout(Some(std::time::Duration::from_secs(10)))?;
    let body = body.unwrap_or("");
    write!(
        stream,
        "{method} {path} HTTP/1.1\r\nHost: {addr}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
        body.len()
    )?;
    let mut response = String::new();
    stream.read_to_string(&mut response)?;
    let status = response
        .split_whitespace()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| std::io::Error::new(std::io::ErrorKind::InvalidData, "no status line"))?;
    let body = response.split_once("\r\n\r\n").map(|(_, b)| b.to_string()).unwrap_or_default();
    Ok((status, body))
}

pub const STRUCTURED: &str = "Findings:\nLungs and Airways:\n- Small right pleural effusion.\n- No pneumothorax.\nImpression:\n1. Small right pleural effusion.";

/// A corpus of `n` test_reviewed studies `s000`, `s001`, ... with
/// structured text.
pub fn fixture_studies(n: usize) -> Vec<srrg::store::Study> {
    (0..n)
        .map(|i| srrg::store::Study {
            study_id: format!("s{i:03}"),
            source: "fixture".into(),
            original_text: format!("Report {i}. Small right effusion."),
            structured_text: Some(STRUCTURED.to_string()),
            split: Some(srrg::store::Split::TestReviewed),
        })
        .collect()
}

/// Five studies, utterance labels on all, reviews on three (one with a
/// label correction).
pub fn reviewed_corpus(dir: &std::path::Path) -> srrg::store::CorpusStore {
    use srrg::store::{CorpusStore, LabelCorrection, Provenance, ReviewDraft, UtteranceRecord};
    let store = CorpusStore::open(dir).unwrap();
    store.upsert_studies(&fixture_studies(5)).unwrap();
    let mut records = Vec::new();
    for study in store.studies() {
        let report = study.structured().unwrap();
        for utt in extract_utterances(&study.study_id, &report) {
            let labels: LabelSet = [("Simple pleural effusion", Status::Present)].into_iter().collect();
            records.push(UtteranceRecord {
                study_id: utt.study_id,
                origin: utt.origin,
                text: utt.text,
                labels: Some(labels),
                provenance: Some(Provenance::Consensus),
            });
        }
    }
    store.put_utterances(&records).unwrap();
    let edits = [
        ("s000", STRUCTURED.replace("Small right", "Moderate right")),
        ("s001", STRUCTURED.to_string()),
        ("s003", STRUCTURED.replace("\n- No pneumothorax.", "")),
    ];
    for (id, text) in edits {
        let corrections = if id == "s003" {
            let origin = store.utterances_of(id)[0].origin;
            let labels: LabelSet = [("Loculated pleural effusion", Status::Uncertain)].into_iter().collect();
            vec![LabelCorrection { origin, labels }]
        } else {
            Vec::new()
        };
        let draft = ReviewDraft {
            study_id: id.into(),
            reviewer: "r1".into(),
            edited_text: text,
            label_corrections: corrections,
        };
        store.save_review(draft, 0).unwrap();
    }
    store
}

pub const BIN: &str = env!("CARGO_BIN_EXE_srrg");

/// Runs the binary in `cwd`; returns the exit code and stdout.
pub fn srrg(cwd: &std::path::Path, args: &[&str]) -> (i32, String) {
    let out = std::process::Command::new(BIN).current_dir(cwd).args(args).output().unwrap();
    (out.status.code().unwrap_or(-1), String::from_utf8(out.stdout).unwrap())
}

pub struct Server {
    pub child: std::process::Child,
    pub addr: String,
}

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// Starts `srrg serve` on an ephemeral port and waits for its listening line.
pub fn start_server(corpus: &std::path::Path) -> Server {
    use std::io::BufRead;
    use std::process::{Command, Stdio};
    let mut child = Command::new(BIN)
        .current_dir(corpus.parent().unwrap())
        .args(["serve", "--all-splits", "--addr", "127.0.0.1:0", "--corpus"])
        .arg(corpus)
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let mut line = String::new();
    std::io::BufReader::new(child.stdout.take().unwrap())
        .read_line(&mut line)
        .unwrap();
    let value: serde_json::Value = serde_json::from_str(&line).expect("listening line");
    Server {
        addr: value["listening"].as_str().unwrap().to_string(),
        child,
    }
}

type AckedReview = ((String, u64), String);

/// Kills the server with SIGKILL while a client is submitting reviews,
/// `iterations` times over the same corpus. Every acknowledged review must
/// be on disk after each restart. Returns the number of acknowledged reviews.
pub fn crash_loop(iterations: usize, seed: u64) -> Result<usize, String> {
    use rand::SeedableRng;
    use srrg::store::CorpusStore;
    use std::sync::{Arc, Mutex};
    use std::time::Duration;

    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    CorpusStore::open(&corpus).unwrap().upsert_studies(&fixture_studies(20)).unwrap();
    let mut acked: BTreeMap<(String, u64), String> = BTreeMap::new();
    let mut rng = StdRng::seed_from_u64(seed);

    for iteration in 0..iterations {
        let versions: BTreeMap<String, u64> = {
            let store = CorpusStore::open(&corpus).unwrap();
            store
                .study_ids()
                .into_iter()
                .map(|id| {
                    let v = store.current_version(&id);
                    (id, v)
                })
                .collect()
        };
        let mut server = start_server(&corpus);
        match http(&server.addr, "GET", "/healthz", None) {
            Ok((200, _)) => {}
            other => return Err(format!("healthz: {other:?}")),
        }

        let log: Arc<Mutex<Vec<AckedReview>>> = Arc::default();
        let writer = {
            let log = log.clone();
            let addr = server.addr.clone();
            let mut versions = versions.clone();
            std::thread::spawn(move || -> Result<(), String> {
                for n in 0.. {
                    let id = format!("s{:03}", n % 20);
                    let text = STRUCTURED.replace("Small", &format!("Edit {iteration}-{n}"));
                    let body = serde_json::json!({
                        "edited_text": text,
                        "expected_version": versions[&id],
                        "reviewer": "crash",
                    })
                    .to_string();
                    match http(&addr, "POST", &format!("/studies/{id}/review"), Some(&body)) {
                        Ok((200, response)) => {
                            let v: serde_json::Value = serde_json::from_str(&response).unwrap();
                            let version = v["version"].as_u64().unwrap();
                            versions.insert(id.clone(), version);
                            log.lock().unwrap().push(((id, version), text));
                        }
                        Ok((status, response)) => return Err(format!("unexpected {status}: {response}")),
                        Err(_) => break,
                    }
                }
                Ok(())
            })
        };
        std::thread::sleep(Duration::from_millis(rng.gen_range(30..200)));
        server.child.kill().unwrap();
        server.child.wait().unwrap();
        writer.join().unwrap()?;
        let new_acks = std::mem::take(&mut *log.lock().unwrap());
        if new_acks.is_empty() {
            return Err(format!("iteration {iteration} acknowledged nothing"));
        }
        acked.extend(new_acks);

        let store = CorpusStore::open(&corpus).unwrap();
        for ((id, version), text) in &acked {
            let found = store.review_history(id).into_iter().find(|r| r.version == *version);
            match found {
                Some(r) if &r.edited_text == text => {}
                Some(_) => return Err(format!("review {id} v{version} has different text")),
                None => return Err(format!("lost review {id} v{version}")),
            }
        }
    }
    Ok(acked.len())
}
