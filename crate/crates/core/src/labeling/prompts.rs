use std::sync::LazyLock;

use regex::Regex;

use super::LabelingError;
use crate::taxonomy::{LabelSet, Status, Taxonomy, NO_FINDING};
use crate::utterance::Utterance;

const STRUCTURING_TEMPLATE: &str = include_str!("../../data/prompts/structuring.txt");
const DISEASE_TEMPLATE: &str = include_str!("../../data/prompts/disease.txt");

/// Prompt asking an LLM to rewrite a free-text report in the structured format.
pub fn build_structuring_prompt(free_text_report: &str) -> Result<String, LabelingError> {
    if free_text_report.trim().is_empty() {
        return Err(LabelingError::EmptyInput);
    }
    Ok(STRUCTURING_TEMPLATE.replacen("{report}", free_text_report, 1))
}

/// Prompt asking an LLM to label each finding (one per line) with diseases
/// and statuses. The disease list is the taxonomy's leaves.
pub fn build_disease_prompt<S: AsRef<str>>(
    utterances: &[S],
    taxonomy: &Taxonomy,
) -> Result<String, LabelingError> {
    if utterances.is_empty() {
        return Err(LabelingError::EmptyInput);
    }
    if let Some(index) = utterances
        .iter()
        .position(|u| u.as_ref().contains(['\n', '\r']))
    {
        return Err(LabelingError::NewlineInUtterance { index });
    }
    let diseases: Vec<String> = taxonomy
        .leaves()
        .into_iter()
        .map(|name| format!("- {name}"))
        .collect();
    let findings: Vec<&str> = utterances.iter().map(|u| u.as_ref().trim()).collect();
    // Split on the placeholders first so substituted text is never rescanned.
    let (head, rest) = DISEASE_TEMPLATE
        .split_once("{diseases}")
        .expect("template has {diseases}");
    let (middle, tail) = rest.split_once("{findings}").expect("template has {findings}");
    Ok(format!(
        "{head}{}{middle}{}{tail}",
        diseases.join("\n"),
        findings.join("\n")
    ))
}

/// Parsed answer to a disease prompt.
#[derive(Debug, Clone, PartialEq)]
pub struct DiseaseResponse {
    /// One set per expected utterance, in order.
    pub labels: Vec<LabelSet>,
    /// Positions whose echoed finding text does not match the expected
    /// utterance. Matching is positional; these are warnings only.
    pub echo_mismatches: Vec<usize>,
}

static ITEM_START: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?:^|\s)\d+\.\s+").unwrap());
static STATUS_SUFFIX: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^(.*?)\s*\(([^()]*)\)\s*$").unwrap());

fn normalize_echo(text: &str) -> String {
    let lowered = text.to_lowercase();
    let collapsed: Vec<&str> = lowered.split_whitespace().collect();
    collapsed
        .join(" ")
        .trim_end_matches(['…', '.'])
        .trim()
        .to_string()
}

fn echo_matches(echo: &str, expected: &str) -> bool {
    const PREFIX_CHARS: usize = 24;
    let (a, b) = (normalize_echo(echo), normalize_echo(expected));
    let k = a.chars().count().min(b.chars().count()).min(PREFIX_CHARS);
    a.chars().take(k).eq(b.chars().take(k))
}

fn parse_answer(line: usize, answer: &str, taxonomy: &Taxonomy) -> Result<LabelSet, LabelingError> {
    let mut labels = LabelSet::new();
    let starts: Vec<(usize, usize)> = ITEM_START
        .find_iter(answer)
        .map(|m| (m.start(), m.end()))
        .collect();
    for (idx, &(_, body_start)) in starts.iter().enumerate() {
        let body_end = starts.get(idx + 1).map_or(answer.len(), |&(s, _)| s);
        let item = answer[body_start..body_end].trim();
        let (name, status_text) = match STATUS_SUFFIX.captures(item) {
            Some(caps) => (caps[1].trim().to_string(), Some(caps[2].trim().to_string())),
            None => (item.to_string(), None),
        };
        let disease = taxonomy
            .resolve(&name)
            .filter(|d| taxonomy.is_leaf(d).unwrap_or(false))
            .ok_or_else(|| LabelingError::UnknownDisease {
                line,
                name: name.clone(),
            })?;
        let status = match status_text {
            Some(text) => text.parse::<Status>().map_err(|_| LabelingError::UnknownStatus {
                line,
                status: text,
            })?,
            None if disease == NO_FINDING => Status::Present,
            None => {
                return Err(LabelingError::UnknownStatus {
                    line,
                    status: String::new(),
                })
            }
        };
        labels.insert(disease, status);
    }
    Ok(labels)
}

/// Parses `<finding> => 1. <disease> (<Status>) 2. ...` lines, one per
/// expected utterance. Blank lines and code fences are ignored.
pub fn parse_disease_response(
    text: &str,
    expected: &[Utterance],
    taxonomy: &Taxonomy,
) -> Result<DiseaseResponse, LabelingError> {
    let mut labels = Vec::with_capacity(expected.len());
    let mut echoes = Vec::with_capacity(expected.len());
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with("```") {
            continue;
        }
        let lineno = idx + 1;
        let (echo, answer) = line
            .rsplit_once("=>")
            .ok_or(LabelingError::LineWithoutArrow { line: lineno })?;
        labels.push(parse_answer(lineno, answer, taxonomy)?);
        echoes.push(echo.trim().to_string());
    }
    if labels.len() != expected.len() {
        return Err(LabelingError::CountMismatch {
            expected: expected.len(),
            found: labels.len(),
        });
    }
    let echo_mismatches = echoes
        .iter()
        .zip(expected)
        .enumerate()
        .filter(|(_, (echo, utt))| !echo_matches(echo, &utt.text))
        .map(|(i, _)| i)
        .collect();
    Ok(DiseaseResponse {
        labels,
        echo_mismatches,
    })
}

/// Writes label sets in the answer format expected by
/// [`parse_disease_response`]. `No Finding` is written bare.
pub fn render_disease_answer<S: AsRef<str>>(findings: &[S], labels: &[LabelSet]) -> String {
    findings
        .iter()
        .zip(labels)
        .map(|(finding, set)| {
            let items: Vec<String> = set
                .iter()
                .enumerate()
                .map(|(i, label)| {
                    if label.disease == NO_FINDING {
                        format!("{}. {}", i + 1, label.disease)
                    } else {
                        format!("{}. {} ({})", i + 1, label.disease, label.status)
                    }
                })
                .collect();
            format!("{} => {}", finding.as_ref().trim(), items.join(" "))
                .trim_end()
                .to_string()
        })
        .collect::<Vec<_>>()
        .join("\n")
}
