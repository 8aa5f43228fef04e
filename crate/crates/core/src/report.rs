//! Structured chest X-ray report model.
//!
//! A structured report is a line-oriented plain-text document made of up to six
//! sections, each introduced by `<Header>:` at the start of a line. The
//! `Findings` section is further grouped under eight fixed anatomical headers
//! whose observations are `- ` bullets, and the `Impression` section is a
//! numbered list ranked by clinical significance:
//!
//! ```text
//! Exam Type: Chest radiograph, PA and lateral
//! History: Cough.
//! Findings:
//! Lungs and Airways:
//! - No focal consolidation.
//! Pleura:
//! - No pleural effusion or pneumothorax.
//! Impression:
//! 1. No acute cardiopulmonary process.
//! ```
//!
//! [`parse_report`] and [`render_report`] are inverse on canonical text: for
//! any strict-parsable input, `parse(render(parse(t))) == parse(t)`.

use std::fmt;
use std::str::FromStr;
use std::sync::LazyLock;

use regex::Regex;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::{Map, Value};

/// Top-level report sections, in canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SectionKind {
    ExamType,
    History,
    Technique,
    Comparison,
    Findings,
    Impression,
}

impl SectionKind {
    pub const ALL: [SectionKind; 6] = [
        SectionKind::ExamType,
        SectionKind::History,
        SectionKind::Technique,
        SectionKind::Comparison,
        SectionKind::Findings,
        SectionKind::Impression,
    ];

    pub fn header(self) -> &'static str {
        match self {
            SectionKind::ExamType => "Exam Type",
            SectionKind::History => "History",
            SectionKind::Technique => "Technique",
            SectionKind::Comparison => "Comparison",
            SectionKind::Findings => "Findings",
            SectionKind::Impression => "Impression",
        }
    }

    pub fn from_header(header: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|kind| kind.header() == header)
    }

    fn from_header_ignore_case(header: &str) -> Option<Self> {
        Self::ALL
            .into_iter()
            .find(|kind| kind.header().eq_ignore_ascii_case(header))
    }

    fn is_free_text(self) -> bool {
        !matches!(self, SectionKind::Findings | SectionKind::Impression)
    }
}

impl fmt::Display for SectionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.header())
    }
}

/// The eight organ-system headers allowed inside `Findings`.
///
/// The derived ordering is the canonical serialization order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AnatomicCategory {
    LungsAndAirways,
    Pleura,
    Cardiovascular,
    HilaAndMediastinum,
    TubesCathetersAndSupportDevices,
    MusculoskeletalAndChestWall,
    Abdominal,
    Other,
}

impl AnatomicCategory {
    pub const ALL: [AnatomicCategory; 8] = [
        AnatomicCategory::LungsAndAirways,
        AnatomicCategory::Pleura,
        AnatomicCategory::Cardiovascular,
        AnatomicCategory::HilaAndMediastinum,
        AnatomicCategory::TubesCathetersAndSupportDevices,
        AnatomicCategory::MusculoskeletalAndChestWall,
        AnatomicCategory::Abdominal,
        AnatomicCategory::Other,
    ];

    pub fn header(self) -> &'static str {
        match self {
            AnatomicCategory::LungsAndAirways => "Lungs and Airways",
            AnatomicCategory::Pleura => "Pleura",
            AnatomicCategory::Cardiovascular => "Cardiovascular",
            AnatomicCategory::HilaAndMediastinum => "Hila and Mediastinum",
            AnatomicCategory::TubesCathetersAndSupportDevices => {
                "Tubes, Catheters, and Support Devices"
            }
            AnatomicCategory::MusculoskeletalAndChestWall => "Musculoskeletal and Chest Wall",
            AnatomicCategory::Abdominal => "Abdominal",
            AnatomicCategory::Other => "Other",
        }
    }

    pub fn from_header(header: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|cat| cat.header() == header)
    }

    fn from_header_ignore_case(header: &str) -> Option<Self> {
        Self::ALL
            .into_iter()
            .find(|cat| cat.header().eq_ignore_ascii_case(header))
    }
}

impl fmt::Display for AnatomicCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.header())
    }
}

impl FromStr for AnatomicCategory {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::from_header(s).ok_or_else(|| format!("unknown anatomical header {s:?}"))
    }
}

impl Serialize for AnatomicCategory {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.header())
    }
}

impl<'de> Deserialize<'de> for AnatomicCategory {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(D::Error::custom)
    }
}

/// Error raised when constructing an [`Observation`] or [`ImpressionItem`]
/// from text that cannot be a single bullet.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ItemError {
    #[error("item text is empty")]
    Empty,
    #[error("item text contains a line break")]
    ContainsNewline,
    #[error("item text starts with a bullet marker")]
    StartsWithBullet,
    #[error("impression rank must be positive")]
    ZeroRank,
}

fn check_item_text(text: &str) -> Result<String, ItemError> {
    let text = text.trim();
    if text.is_empty() {
        return Err(ItemError::Empty);
    }
    if text.contains(['\n', '\r']) {
        return Err(ItemError::ContainsNewline);
    }
    Ok(text.to_string())
}

/// One findings bullet.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Observation(String);

impl Observation {
    pub fn new(text: &str) -> Result<Self, ItemError> {
        let text = check_item_text(text)?;
        if text.starts_with("- ") {
            return Err(ItemError::StartsWithBullet);
        }
        Ok(Observation(text))
    }

    pub fn text(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Observation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ImpressionItem {
    rank: u32,
    text: String,
}

impl ImpressionItem {
    pub fn new(rank: u32, text: &str) -> Result<Self, ItemError> {
        if rank == 0 {
            return Err(ItemError::ZeroRank);
        }
        Ok(ImpressionItem {
            rank,
            text: check_item_text(text)?,
        })
    }

    pub fn rank(&self) -> u32 {
        self.rank
    }

    pub fn text(&self) -> &str {
        &self.text
    }
}

/// Observations listed under one anatomical header.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FindingsGroup {
    pub category: AnatomicCategory,
    pub observations: Vec<Observation>,
}

/// A parsed structured report.
///
/// `findings` and `impression` are `None` when the section header is absent,
/// and `Some(empty)` when the header is present without content (legal to
/// parse, flagged by [`crate::validate::validate_desiderata`]).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StructuredReport {
    pub exam_type: Option<String>,
    pub history: Option<String>,
    pub technique: Option<String>,
    pub comparison: Option<String>,
    pub findings: Option<Vec<FindingsGroup>>,
    pub impression: Option<Vec<ImpressionItem>>,
}

impl StructuredReport {
    /// Builds a report holding only an impression, numbering items from 1.
    pub fn with_impression<S: AsRef<str>>(items: &[S]) -> Result<Self, ItemError> {
        let mut report = StructuredReport::default();
        report.set_impression(items)?;
        Ok(report)
    }

    /// Replaces the impression, numbering items from 1.
    pub fn set_impression<S: AsRef<str>>(&mut self, items: &[S]) -> Result<(), ItemError> {
        let items = items
            .iter()
            .enumerate()
            .map(|(i, text)| ImpressionItem::new(i as u32 + 1, text.as_ref()))
            .collect::<Result<Vec<_>, _>>()?;
        self.impression = Some(items);
        Ok(())
    }

    /// Appends observations under `category`, creating the group if needed.
    pub fn add_findings<S: AsRef<str>>(
        &mut self,
        category: AnatomicCategory,
        bullets: &[S],
    ) -> Result<(), ItemError> {
        let observations = bullets
            .iter()
            .map(|b| Observation::new(b.as_ref()))
            .collect::<Result<Vec<_>, _>>()?;
        let groups = self.findings.get_or_insert_with(Vec::new);
        match groups.iter_mut().find(|g| g.category == category) {
            Some(group) => group.observations.extend(observations),
            None => groups.push(FindingsGroup {
                category,
                observations,
            }),
        }
        Ok(())
    }

    pub fn free_text(&self, kind: SectionKind) -> Option<&str> {
        match kind {
            SectionKind::ExamType => self.exam_type.as_deref(),
            SectionKind::History => self.history.as_deref(),
            SectionKind::Technique => self.technique.as_deref(),
            SectionKind::Comparison => self.comparison.as_deref(),
            SectionKind::Findings | SectionKind::Impression => None,
        }
    }

    fn free_text_mut(&mut self, kind: SectionKind) -> &mut Option<String> {
        match kind {
            SectionKind::ExamType => &mut self.exam_type,
            SectionKind::History => &mut self.history,
            SectionKind::Technique => &mut self.technique,
            SectionKind::Comparison => &mut self.comparison,
            SectionKind::Findings | SectionKind::Impression => {
                unreachable!("not a free-text section")
            }
        }
    }

    pub fn has_section(&self, kind: SectionKind) -> bool {
        match kind {
            SectionKind::Findings => self.findings.is_some(),
            SectionKind::Impression => self.impression.is_some(),
            other => self.free_text(other).is_some(),
        }
    }

    /// Observations of one category, if the category is present.
    pub fn category(&self, category: AnatomicCategory) -> Option<&[Observation]> {
        self.findings
            .as_ref()?
            .iter()
            .find(|g| g.category == category)
            .map(|g| g.observations.as_slice())
    }

    /// Categories present in findings, in document order.
    pub fn categories(&self) -> Vec<AnatomicCategory> {
        self.findings
            .iter()
            .flatten()
            .map(|g| g.category)
            .collect()
    }

    pub fn impression_items(&self) -> &[ImpressionItem] {
        self.impression.as_deref().unwrap_or(&[])
    }

    /// Canonical text of the findings groups only (no `Findings:` header).
    pub fn findings_text(&self) -> String {
        let mut lines = Vec::new();
        push_findings_lines(self, &mut lines);
        lines.join("\n")
    }

    /// Canonical text of the impression items only (no `Impression:` header).
    pub fn impression_text(&self) -> String {
        self.impression_items()
            .iter()
            .map(|item| format!("{}. {}", item.rank, item.text))
            .collect::<Vec<_>>()
            .join("\n")
    }
}

/// Strictness of [`parse_report`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ParseMode {
    #[default]
    Strict,
    /// Best-effort repair of LLM output drift; issues are still reported.
    Lenient,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ParseIssueCode {
    UnknownSectionHeader,
    UnknownAnatomicHeader,
    MissingColon,
    BulletOutsideCategory,
    NonConsecutiveImpressionNumbers,
    EmptyDocument,
    DuplicateSection,
    DuplicateCategory,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseIssue {
    /// 1-based line number in the input.
    pub line: usize,
    pub code: ParseIssueCode,
    pub message: String,
}

impl fmt::Display for ParseIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {:?}: {}", self.line, self.code, self.message)
    }
}

/// Successful parse result. In lenient mode `issues` lists every repair.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedReport {
    pub report: StructuredReport,
    pub issues: Vec<ParseIssue>,
}

static IMPRESSION_ITEM: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^(\d+)\.\s+(.*)$").unwrap());

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Cursor {
    Preamble,
    Section(SectionKind),
}

struct Parser {
    mode: ParseMode,
    report: StructuredReport,
    issues: Vec<ParseIssue>,
    cursor: Cursor,
    seen_sections: Vec<SectionKind>,
    current_category: Option<usize>,
}

impl Parser {
    fn issue(&mut self, line: usize, code: ParseIssueCode, message: impl Into<String>) {
        self.issues.push(ParseIssue {
            line,
            code,
            message: message.into(),
        });
    }

    fn lenient(&self) -> bool {
        self.mode == ParseMode::Lenient
    }

    fn section_header<'a>(&self, line: &'a str) -> Option<(SectionKind, &'a str)> {
        let (head, rest) = line.split_once(':')?;
        let kind = if self.lenient() {
            SectionKind::from_header_ignore_case(head.trim())
        } else {
            SectionKind::from_header(head)
        }?;
        Some((kind, rest.trim()))
    }

    fn open_section(&mut self, lineno: usize, kind: SectionKind, rest: &str) {
        if self.seen_sections.contains(&kind) {
            self.issue(
                lineno,
                ParseIssueCode::DuplicateSection,
                format!("section {:?} appears more than once", kind.header()),
            );
        } else {
            self.seen_sections.push(kind);
        }
        self.cursor = Cursor::Section(kind);
        self.current_category = None;
        match kind {
            SectionKind::Findings => {
                self.report.findings.get_or_insert_with(Vec::new);
                if !rest.is_empty() {
                    self.findings_line(lineno, rest);
                }
            }
            SectionKind::Impression => {
                self.report.impression.get_or_insert_with(Vec::new);
                if !rest.is_empty() {
                    self.impression_line(lineno, rest);
                }
            }
            free => {
                let slot = self.report.free_text_mut(free);
                match slot {
                    Some(existing) if !rest.is_empty() => {
                        if !existing.is_empty() {
                            existing.push('\n');
                        }
                        existing.push_str(rest);
                    }
                    Some(_) => {}
                    None => *slot = Some(rest.to_string()),
                }
            }
        }
    }

    fn line(&mut self, lineno: usize, raw: &str) {
        let line = raw.trim_end();
        if line.trim().is_empty() {
            return;
        }
        if let Some((kind, rest)) = self.section_header(line) {
            self.open_section(lineno, kind, rest);
            return;
        }
        let bare = line.trim();
        if let Some(kind) = SectionKind::from_header_ignore_case(bare) {
            self.issue(
                lineno,
                ParseIssueCode::MissingColon,
                format!("section header {:?} must be followed by a colon", kind.header()),
            );
            if self.lenient() {
                self.open_section(lineno, kind, "");
            }
            return;
        }
        match self.cursor {
            Cursor::Preamble => {
                let code = ParseIssueCode::UnknownSectionHeader;
                let message = match line.split_once(':') {
                    Some((head, _)) => format!("{:?} is not a report section header", head.trim()),
                    None => "text before the first section header".to_string(),
                };
                self.issue(lineno, code, message);
            }
            Cursor::Section(SectionKind::Findings) => self.findings_line(lineno, line),
            Cursor::Section(SectionKind::Impression) => self.impression_line(lineno, line),
            Cursor::Section(kind) => {
                debug_assert!(kind.is_free_text());
                let slot = self.report.free_text_mut(kind);
                let text = slot.get_or_insert_with(String::new);
                if !text.is_empty() {
                    text.push('\n');
                }
                text.push_str(line.trim());
            }
        }
    }

    fn bullet_text<'a>(&self, line: &'a str) -> Option<&'a str> {
        let trimmed = line.trim_start();
        if let Some(rest) = trimmed.strip_prefix("- ") {
            return Some(rest);
        }
        if trimmed == "-" {
            return Some("");
        }
        if self.lenient() {
            for marker in ["• ", "* ", "•"] {
                if let Some(rest) = trimmed.strip_prefix(marker) {
                    return Some(rest);
                }
            }
        }
        None
    }

    fn category_header(&self, line: &str) -> Option<(AnatomicCategory, String)> {
        let (head, rest) = line.trim().split_once(':')?;
        let category = if self.lenient() {
            AnatomicCategory::from_header_ignore_case(head.trim())
        } else {
            AnatomicCategory::from_header(head)
        }?;
        Some((category, rest.trim().to_string()))
    }

    fn open_category(&mut self, lineno: usize, category: AnatomicCategory) {
        let groups = self.report.findings.get_or_insert_with(Vec::new);
        if let Some(pos) = groups.iter().position(|g| g.category == category) {
            self.current_category = Some(pos);
            self.issue(
                lineno,
                ParseIssueCode::DuplicateCategory,
                format!("anatomical header {:?} appears more than once", category.header()),
            );
        } else {
            groups.push(FindingsGroup {
                category,
                observations: Vec::new(),
            });
            self.current_category = Some(groups.len() - 1);
        }
    }

    fn push_bullet(&mut self, lineno: usize, text: &str) {
        let Some(idx) = self.current_category else {
            self.issue(
                lineno,
                ParseIssueCode::BulletOutsideCategory,
                "bullet is not under an anatomical header",
            );
            if self.lenient() {
                self.open_category(lineno, AnatomicCategory::Other);
                self.push_bullet(lineno, text);
            }
            return;
        };
        if let Ok(obs) = Observation::new(text) {
            self.report.findings.as_mut().expect("findings open")[idx]
                .observations
                .push(obs);
        }
    }

    fn findings_line(&mut self, lineno: usize, line: &str) {
        if let Some(text) = self.bullet_text(line) {
            let text = text.trim().to_string();
            self.push_bullet(lineno, &text);
            return;
        }
        if let Some((category, rest)) = self.category_header(line) {
            self.open_category(lineno, category);
            if !rest.is_empty() {
                self.push_bullet(lineno, &rest);
            }
            return;
        }
        let bare = line.trim();
        if let Some(category) = AnatomicCategory::from_header_ignore_case(bare) {
            self.issue(
                lineno,
                ParseIssueCode::MissingColon,
                format!("anatomical header {:?} must be followed by a colon", category.header()),
            );
            if self.lenient() {
                self.open_category(lineno, category);
            }
            return;
        }
        if bare.ends_with(':') {
            self.issue(
                lineno,
                ParseIssueCode::UnknownAnatomicHeader,
                format!(
                    "{:?} is not one of the eight anatomical headers",
                    bare.trim_end_matches(':')
                ),
            );
            return;
        }
        // Wrapped continuation of the previous bullet.
        if let Some(last) = self
            .current_category
            .and_then(|idx| self.report.findings.as_mut()?[idx].observations.last_mut())
        {
            last.0.push(' ');
            last.0.push_str(bare);
            return;
        }
        self.issue(
            lineno,
            ParseIssueCode::BulletOutsideCategory,
            "findings text must be a '- ' bullet under an anatomical header",
        );
        if self.lenient() {
            self.push_bullet(lineno, bare);
        }
    }

    fn impression_line(&mut self, lineno: usize, line: &str) {
        let bare = line.trim();
        let expected = self.report.impression.get_or_insert_with(Vec::new).len() as u32 + 1;
        if let Some(caps) = IMPRESSION_ITEM.captures(bare) {
            let number: Option<u32> = caps[1].parse().ok();
            let text = caps[2].trim().to_string();
            if number != Some(expected) {
                self.issue(
                    lineno,
                    ParseIssueCode::NonConsecutiveImpressionNumbers,
                    format!("expected impression item {expected}, found {}", &caps[1]),
                );
            }
            if let Ok(item) = ImpressionItem::new(expected, &text) {
                self.report.impression.as_mut().unwrap().push(item);
            }
            return;
        }
        if bare.ends_with(':') {
            self.issue(
                lineno,
                ParseIssueCode::UnknownSectionHeader,
                format!("{:?} is not a report section header", bare.trim_end_matches(':')),
            );
            return;
        }
        if let Some(text) = self.bullet_text(bare) {
            self.issue(
                lineno,
                ParseIssueCode::NonConsecutiveImpressionNumbers,
                "impression items must be numbered",
            );
            if let Ok(item) = ImpressionItem::new(expected, text) {
                self.report.impression.as_mut().unwrap().push(item);
            }
            return;
        }
        match self.report.impression.as_mut().unwrap().last_mut() {
            // Wrapped continuation of the previous item.
            Some(last) => {
                last.text.push(' ');
                last.text.push_str(bare);
            }
            None => {
                self.issue(
                    lineno,
                    ParseIssueCode::NonConsecutiveImpressionNumbers,
                    "impression items must be numbered",
                );
                if let Ok(item) = ImpressionItem::new(expected, bare) {
                    self.report.impression.as_mut().unwrap().push(item);
                }
            }
        }
    }
}

/// Parses plain-text structured report.
///
/// Strict mode returns `Err` with every issue found if there is at least one.
/// Lenient mode repairs what it can (unnumbered impression lines, `•`/`*`
/// bullets, missing colons, header case) and returns the issue list alongside
/// the report; it fails only on an empty document.
pub fn parse_report(text: &str, mode: ParseMode) -> Result<ParsedReport, Vec<ParseIssue>> {
    if text.trim().is_empty() {
        return Err(vec![ParseIssue {
            line: 1,
            code: ParseIssueCode::EmptyDocument,
            message: "document is empty".to_string(),
        }]);
    }
    let mut parser = Parser {
        mode,
        report: StructuredReport::default(),
        issues: Vec::new(),
        cursor: Cursor::Preamble,
        seen_sections: Vec::new(),
        current_category: None,
    };
    for (idx, line) in text.lines().enumerate() {
        parser.line(idx + 1, line);
    }
    if mode == ParseMode::Strict && !parser.issues.is_empty() {
        return Err(parser.issues);
    }
    Ok(ParsedReport {
        report: parser.report,
        issues: parser.issues,
    })
}

fn push_findings_lines(report: &StructuredReport, lines: &mut Vec<String>) {
    let Some(groups) = &report.findings else {
        return;
    };
    let mut groups: Vec<&FindingsGroup> = groups.iter().collect();
    groups.sort_by_key(|g| g.category);
    for group in groups {
        lines.push(format!("{}:", group.category.header()));
        for obs in &group.observations {
            lines.push(format!("- {}", obs.text()));
        }
    }
}

/// Renders the canonical plain-text form of a report.
pub fn render_report(report: &StructuredReport) -> String {
    let mut lines: Vec<String> = Vec::new();
    for kind in SectionKind::ALL {
        match kind {
            SectionKind::Findings => {
                if report.findings.is_some() {
                    lines.push("Findings:".to_string());
                    push_findings_lines(report, &mut lines);
                }
            }
            SectionKind::Impression => {
                if report.impression.is_some() {
                    lines.push("Impression:".to_string());
                    for item in report.impression_items() {
                        lines.push(format!("{}. {}", item.rank, item.text));
                    }
                }
            }
            free => {
                if let Some(text) = report.free_text(free) {
                    let mut body = text.lines().map(str::trim).filter(|l| !l.is_empty());
                    match body.next() {
                        Some(first) => lines.push(format!("{}: {first}", free.header())),
                        None => lines.push(format!("{}:", free.header())),
                    }
                    lines.extend(body.map(str::to_string));
                }
            }
        }
    }
    lines.join("\n")
}

impl fmt::Display for StructuredReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&render_report(self))
    }
}

// JSON form: {exam_type, history, technique, comparison,
//             findings: {"<header>": [bullet, ...]}, impression: [item, ...]}
impl Serialize for StructuredReport {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut obj = Map::new();
        let opt = |v: &Option<String>| v.clone().map(Value::String).unwrap_or(Value::Null);
        obj.insert("exam_type".into(), opt(&self.exam_type));
        obj.insert("history".into(), opt(&self.history));
        obj.insert("technique".into(), opt(&self.technique));
        obj.insert("comparison".into(), opt(&self.comparison));
        let findings = self.findings.as_ref().map(|groups| {
            let mut sorted: Vec<&FindingsGroup> = groups.iter().collect();
            sorted.sort_by_key(|g| g.category);
            let map: Map<String, Value> = sorted
                .into_iter()
                .map(|g| {
                    let bullets = g
                        .observations
                        .iter()
                        .map(|o| Value::String(o.text().to_string()))
                        .collect();
                    (g.category.header().to_string(), Value::Array(bullets))
                })
                .collect();
            Value::Object(map)
        });
        obj.insert("findings".into(), findings.unwrap_or(Value::Null));
        let impression = self.impression.as_ref().map(|items| {
            Value::Array(
                items
                    .iter()
                    .map(|i| Value::String(i.text().to_string()))
                    .collect(),
            )
        });
        obj.insert("impression".into(), impression.unwrap_or(Value::Null));
        Value::Object(obj).serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for StructuredReport {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Raw {
            #[serde(default)]
            exam_type: Option<String>,
            #[serde(default)]
            history: Option<String>,
            #[serde(default)]
            technique: Option<String>,
            #[serde(default)]
            comparison: Option<String>,
            #[serde(default)]
            findings: Option<Map<String, Value>>,
            #[serde(default)]
            impression: Option<Vec<String>>,
        }
        let raw = Raw::deserialize(deserializer)?;
        let mut report = StructuredReport {
            exam_type: raw.exam_type,
            history: raw.history,
            technique: raw.technique,
            comparison: raw.comparison,
            findings: None,
            impression: None,
        };
        if let Some(findings) = raw.findings {
            let mut groups = Vec::new();
            for (header, bullets) in findings {
                let category: AnatomicCategory = header.parse().map_err(D::Error::custom)?;
                if groups.iter().any(|g: &FindingsGroup| g.category == category) {
                    return Err(D::Error::custom(format!("duplicate category {header:?}")));
                }
                let bullets: Vec<String> =
                    serde_json::from_value(bullets).map_err(D::Error::custom)?;
                let observations = bullets
                    .iter()
                    .map(|b| Observation::new(b))
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(D::Error::custom)?;
                groups.push(FindingsGroup {
                    category,
                    observations,
                });
            }
            report.findings = Some(groups);
        }
        if let Some(items) = raw.impression {
            report.set_impression(&items).map_err(D::Error::custom)?;
        }
        Ok(report)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn strict(text: &str) -> StructuredReport {
        parse_report(text, ParseMode::Strict)
            .unwrap_or_else(|issues| panic!("unexpected issues: {issues:?}"))
            .report
    }

    fn codes(text: &str, mode: ParseMode) -> Vec<(usize, ParseIssueCode)> {
        let issues = match parse_report(text, mode) {
            Ok(parsed) => parsed.issues,
            Err(issues) => issues,
        };
        issues.into_iter().map(|i| (i.line, i.code)).collect()
    }

    const FULL: &str = "\
Exam Type: Chest radiograph, PA and lateral
History: Shortness of breath.
Technique: Frontal and lateral views.
Comparison: None.
Findings:
Lungs and Airways:
- No focal consolidation.
- Mild bibasilar atelectasis.
Pleura:
- No pleural effusion.
Cardiovascular:
- Normal heart size.
Impression:
1. Mild bibasilar atelectasis.
2. No acute cardiopulmonary process.";

    #[test]
    fn parses_every_section() {
        let report = strict(FULL);
        assert_eq!(
            report.exam_type.as_deref(),
            Some("Chest radiograph, PA and lateral")
        );
        assert_eq!(report.comparison.as_deref(), Some("None."));
        assert_eq!(
            report.categories(),
            vec![
                AnatomicCategory::LungsAndAirways,
                AnatomicCategory::Pleura,
                AnatomicCategory::Cardiovascular
            ]
        );
        assert_eq!(
            report.category(AnatomicCategory::LungsAndAirways).unwrap()[1].text(),
            "Mild bibasilar atelectasis."
        );
        assert_eq!(report.impression_items().len(), 2);
        assert_eq!(render_report(&report), FULL);
    }

    #[test]
    fn impression_only_renders_minimal_text() {
        let report = StructuredReport::with_impression(&["No acute process."]).unwrap();
        assert_eq!(render_report(&report), "Impression:\n1. No acute process.");
    }

    #[test]
    fn pleura_bullets_render_under_header() {
        let mut report = StructuredReport::default();
        report
            .add_findings(
                AnatomicCategory::Pleura,
                &["No pneumothorax.", "Small effusion."],
            )
            .unwrap();
        assert_eq!(
            render_report(&report),
            "Findings:\nPleura:\n- No pneumothorax.\n- Small effusion."
        );
    }

    #[test]
    fn empty_document_is_rejected_in_both_modes() {
        for mode in [ParseMode::Strict, ParseMode::Lenient] {
            assert_eq!(codes("", mode), vec![(1, ParseIssueCode::EmptyDocument)]);
            assert_eq!(
                codes("  \n\t\n", mode),
                vec![(1, ParseIssueCode::EmptyDocument)]
            );
        }
    }

    #[test]
    fn unknown_anatomic_header_is_reported_at_its_line() {
        let found = codes("Findings:\nBones:\n- fracture", ParseMode::Strict);
        assert_eq!(found[0], (2, ParseIssueCode::UnknownAnatomicHeader));
    }

    #[test]
    fn strict_mode_flags_drift() {
        assert_eq!(
            codes("Impression:\n1. a\n3. b", ParseMode::Strict),
            vec![(3, ParseIssueCode::NonConsecutiveImpressionNumbers)]
        );
        assert_eq!(
            codes("Findings\nPleura:\n- a", ParseMode::Strict)[0],
            (1, ParseIssueCode::MissingColon)
        );
        assert_eq!(
            codes("Findings:\n- orphan", ParseMode::Strict),
            vec![(2, ParseIssueCode::BulletOutsideCategory)]
        );
        assert_eq!(
            codes("Impression:\n1. a\nImpression:\n2. b", ParseMode::Strict),
            vec![(3, ParseIssueCode::DuplicateSection)]
        );
        assert_eq!(
            codes("Findings:\nPleura:\n- a\nPleura:\n- b", ParseMode::Strict),
            vec![(4, ParseIssueCode::DuplicateCategory)]
        );
        assert_eq!(
            codes("Addendum: called the team", ParseMode::Strict),
            vec![(1, ParseIssueCode::UnknownSectionHeader)]
        );
    }

    #[test]
    fn lenient_mode_repairs_llm_drift() {
        let text = "findings:\nPleura:\n• No effusion.\n* No pneumothorax.\nImpression:\nNo acute process.";
        let parsed = parse_report(text, ParseMode::Lenient).unwrap();
        let report = parsed.report;
        let pleura = report.category(AnatomicCategory::Pleura).unwrap();
        assert_eq!(pleura.len(), 2);
        assert_eq!(pleura[1].text(), "No pneumothorax.");
        assert_eq!(report.impression_items()[0].rank(), 1);
        assert_eq!(report.impression_items()[0].text(), "No acute process.");
        assert!(parsed
            .issues
            .iter()
            .any(|i| i.code == ParseIssueCode::NonConsecutiveImpressionNumbers));
        // Normalized output parses strictly.
        strict(&render_report(&report));
    }

    #[test]
    fn wrapped_lines_join_previous_item() {
        let text = "Impression:\n1. Bibasilar opacities may be related to atelectasis, although underlying\n   infection is of concern.\n2. New opacity.";
        let report = strict(text);
        assert_eq!(
            report.impression_items()[0].text(),
            "Bibasilar opacities may be related to atelectasis, although underlying infection is of concern."
        );
    }

    #[test]
    fn colons_inside_prose_are_not_headers() {
        let report = strict("History: 65M. Question: pneumonia?\nImpression:\n1. Ratio: normal.");
        assert_eq!(report.history.as_deref(), Some("65M. Question: pneumonia?"));
        assert_eq!(report.impression_items()[0].text(), "Ratio: normal.");
    }

    #[test]
    fn canonical_order_on_render_source_order_on_parse() {
        let report = strict("Findings:\nOther:\n- x\nPleura:\n- y");
        assert_eq!(
            report.categories(),
            vec![AnatomicCategory::Other, AnatomicCategory::Pleura]
        );
        assert_eq!(
            render_report(&report),
            "Findings:\nPleura:\n- y\nOther:\n- x"
        );
    }

    #[test]
    fn json_shape() {
        let report = strict(FULL);
        let json = serde_json::to_value(&report).unwrap();
        assert_eq!(json["findings"]["Pleura"][0], "No pleural effusion.");
        assert_eq!(json["impression"][1], "No acute cardiopulmonary process.");
        let back: StructuredReport = serde_json::from_value(json).unwrap();
        assert_eq!(back, report);
        let bad = serde_json::json!({"findings": {"Bones": ["x"]}});
        assert!(serde_json::from_value::<StructuredReport>(bad).is_err());
    }

    #[test]
    fn item_constructors_reject_invalid_text() {
        assert_eq!(Observation::new("  "), Err(ItemError::Empty));
        assert_eq!(Observation::new("a\nb"), Err(ItemError::ContainsNewline));
        assert_eq!(Observation::new("- a"), Err(ItemError::StartsWithBullet));
        assert_eq!(ImpressionItem::new(0, "a"), Err(ItemError::ZeroRank));
    }
}
