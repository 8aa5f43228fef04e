//! Disease tree, assertion statuses, label spaces and projections.
//!
//! The tree is data, not code: [`Taxonomy::bundled`] loads the chest X-ray
//! disease tree shipped in `data/taxonomy.json`, and any file with the same
//! `{"name": .., "children": [..]}` shape (a single root or an array of roots)
//! can replace it.
//!
//! Terminology: a *leaf* is a node without children; the *upper* label of a
//! leaf is its parent, or the leaf itself when it is a root (`No Finding`).

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub const NO_FINDING: &str = "No Finding";

const BUNDLED_TAXONOMY: &str = include_str!("../data/taxonomy.json");
const BUNDLED_CHEXBERT_MAPPING: &str = include_str!("../data/chexbert_mapping.json");

/// The 14-class CheXbert label space.
pub const CHEXBERT_CLASSES: [&str; 14] = [
    "Enlarged Cardiomediastinum",
    "Cardiomegaly",
    "Lung Opacity",
    "Lung Lesion",
    "Edema",
    "Consolidation",
    "Pneumonia",
    "Atelectasis",
    "Pneumothorax",
    "Pleural Effusion",
    "Pleural Other",
    "Fracture",
    "Support Devices",
    "No Finding",
];

#[derive(Debug, thiserror::Error)]
pub enum TaxonomyError {
    #[error("malformed taxonomy file: {0}")]
    Json(#[from] serde_json::Error),
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("taxonomy has no nodes")]
    EmptyTree,
    #[error("node name {0:?} is used more than once")]
    DuplicateName(String),
    #[error("node {0:?} is its own ancestor")]
    CycleDetected(String),
    #[error("node name is empty")]
    EmptyName,
    #[error("unknown label {0:?}")]
    UnknownLabel(String),
    #[error("{0:?} is not a leaf of the taxonomy")]
    NotALeaf(String),
    #[error("{class:?} (mapped from {disease:?}) is not a CheXbert class")]
    UnknownChexbertClass { disease: String, class: String },
}

/// Assertion state of a disease mention.
///
/// Ordered `Absent < Uncertain < Present`; merging two statuses for the same
/// disease keeps the maximum.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize,
)]
pub enum Status {
    Absent,
    Uncertain,
    Present,
}

impl Status {
    pub const ALL: [Status; 3] = [Status::Present, Status::Absent, Status::Uncertain];

    pub fn merge(self, other: Status) -> Status {
        self.max(other)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Status::Present => "Present",
            Status::Absent => "Absent",
            Status::Uncertain => "Uncertain",
        }
    }
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Status {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "present" => Ok(Status::Present),
            "absent" => Ok(Status::Absent),
            "uncertain" => Ok(Status::Uncertain),
            _ => Err(format!("unknown status {s:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GranularLabel {
    pub disease: String,
    pub status: Status,
}

impl GranularLabel {
    pub fn new(disease: impl Into<String>, status: Status) -> Self {
        GranularLabel {
            disease: disease.into(),
            status,
        }
    }
}

impl fmt::Display for GranularLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ({})", self.disease, self.status)
    }
}

/// Annotations of one utterance: at most one status per disease.
///
/// Inserting a disease twice merges the statuses by precedence, and
/// `No Finding` is always stored as `Present`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LabelSet(BTreeMap<String, Status>);

impl LabelSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, disease: impl Into<String>, status: Status) {
        let disease = disease.into();
        let status = if disease == NO_FINDING {
            Status::Present
        } else {
            status
        };
        self.0
            .entry(disease)
            .and_modify(|s| *s = s.merge(status))
            .or_insert(status);
    }

    pub fn status(&self, disease: &str) -> Option<Status> {
        self.0.get(disease).copied()
    }

    pub fn contains(&self, disease: &str) -> bool {
        self.0.contains_key(disease)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = GranularLabel> + '_ {
        self.0
            .iter()
            .map(|(d, s)| GranularLabel::new(d.clone(), *s))
    }

    pub fn diseases(&self) -> impl Iterator<Item = &str> {
        self.0.keys().map(String::as_str)
    }

    /// Merges `other` into `self` by status precedence.
    pub fn extend_from(&mut self, other: &LabelSet) {
        for (disease, status) in &other.0 {
            self.insert(disease.clone(), *status);
        }
    }

    pub fn union(sets: impl IntoIterator<Item = impl std::borrow::Borrow<LabelSet>>) -> LabelSet {
        let mut out = LabelSet::new();
        for set in sets {
            out.extend_from(set.borrow());
        }
        out
    }

    /// Disease names only.
    pub fn disease_set(&self) -> BTreeSet<String> {
        self.0.keys().cloned().collect()
    }
}

impl FromIterator<GranularLabel> for LabelSet {
    fn from_iter<I: IntoIterator<Item = GranularLabel>>(iter: I) -> Self {
        let mut set = LabelSet::new();
        for label in iter {
            set.insert(label.disease, label.status);
        }
        set
    }
}

impl<S: Into<String>> FromIterator<(S, Status)> for LabelSet {
    fn from_iter<I: IntoIterator<Item = (S, Status)>>(iter: I) -> Self {
        iter.into_iter()
            .map(|(d, s)| GranularLabel::new(d, s))
            .collect()
    }
}

impl fmt::Display for LabelSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.iter().map(|l| l.to_string()).collect();
        write!(f, "{{{}}}", parts.join(", "))
    }
}

// Wire form: [{"disease": .., "status": ..}, ...]
impl Serialize for LabelSet {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_seq(self.iter())
    }
}

impl<'de> Deserialize<'de> for LabelSet {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let labels = Vec::<GranularLabel>::deserialize(deserializer)?;
        Ok(labels.into_iter().collect())
    }
}

/// Evaluation label spaces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub enum LabelSpace {
    #[default]
    Leaves,
    Upper,
    LeavesWithStatus,
    UpperWithStatus,
}

impl LabelSpace {
    pub const ALL: [LabelSpace; 4] = [
        LabelSpace::Leaves,
        LabelSpace::Upper,
        LabelSpace::LeavesWithStatus,
        LabelSpace::UpperWithStatus,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            LabelSpace::Leaves => "leaves",
            LabelSpace::Upper => "upper",
            LabelSpace::LeavesWithStatus => "leaves_status",
            LabelSpace::UpperWithStatus => "upper_status",
        }
    }

    pub fn with_status(self) -> bool {
        matches!(self, LabelSpace::LeavesWithStatus | LabelSpace::UpperWithStatus)
    }

    pub fn is_upper(self) -> bool {
        matches!(self, LabelSpace::Upper | LabelSpace::UpperWithStatus)
    }
}

impl fmt::Display for LabelSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LabelSpace {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        LabelSpace::ALL
            .into_iter()
            .find(|space| space.as_str() == s)
            .ok_or_else(|| format!("unknown label space {s:?} (expected leaves, upper, leaves_status or upper_status)"))
    }
}

impl Serialize for LabelSpace {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.as_str())
    }
}

/// One class of a label space: a disease name, with a status in the
/// status-aware spaces.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ClassLabel {
    pub name: String,
    pub status: Option<Status>,
}

impl ClassLabel {
    pub fn plain(name: impl Into<String>) -> Self {
        ClassLabel {
            name: name.into(),
            status: None,
        }
    }

    pub fn with_status(name: impl Into<String>, status: Status) -> Self {
        ClassLabel {
            name: name.into(),
            status: Some(status),
        }
    }
}

impl fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.status {
            Some(status) => write!(f, "{} ({status})", self.name),
            None => f.write_str(&self.name),
        }
    }
}

impl Serialize for ClassLabel {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

pub type ClassSet = BTreeSet<ClassLabel>;

#[derive(Deserialize)]
#[serde(untagged)]
enum TreeFile {
    Forest(Vec<TreeNode>),
    Root(TreeNode),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TreeNode {
    name: String,
    #[serde(default)]
    children: Vec<TreeNode>,
}

#[derive(Debug, Clone)]
pub struct DiseaseNode {
    pub name: String,
    pub parent: Option<usize>,
    pub children: Vec<usize>,
}

/// Immutable disease forest.
#[derive(Debug, Clone)]
pub struct Taxonomy {
    nodes: Vec<DiseaseNode>,
    roots: Vec<usize>,
    by_name: HashMap<String, usize>,
    by_lower_name: HashMap<String, usize>,
    source: String,
}

impl Taxonomy {
    pub fn bundled() -> Taxonomy {
        Taxonomy::from_json(BUNDLED_TAXONOMY).expect("bundled taxonomy is valid")
    }

    pub fn load(path: &Path) -> Result<Taxonomy, TaxonomyError> {
        let text = std::fs::read_to_string(path).map_err(|source| TaxonomyError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Taxonomy::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Taxonomy, TaxonomyError> {
        let roots = match serde_json::from_str::<TreeFile>(text)? {
            TreeFile::Forest(roots) => roots,
            TreeFile::Root(root) => vec![root],
        };
        if roots.is_empty() {
            return Err(TaxonomyError::EmptyTree);
        }
        let mut taxonomy = Taxonomy {
            nodes: Vec::new(),
            roots: Vec::new(),
            by_name: HashMap::new(),
            by_lower_name: HashMap::new(),
            source: text.to_string(),
        };
        let mut path = Vec::new();
        for root in &roots {
            let id = taxonomy.add(root, None, &mut path)?;
            taxonomy.roots.push(id);
        }
        Ok(taxonomy)
    }

    fn add(
        &mut self,
        node: &TreeNode,
        parent: Option<usize>,
        path: &mut Vec<String>,
    ) -> Result<usize, TaxonomyError> {
        let name = node.name.trim().to_string();
        if name.is_empty() {
            return Err(TaxonomyError::EmptyName);
        }
        // Names are the node identity, so a repeated name on the ancestor
        // path would turn the tree into a cycle.
        if path.contains(&name) {
            return Err(TaxonomyError::CycleDetected(name));
        }
        if self.by_name.contains_key(&name) {
            return Err(TaxonomyError::DuplicateName(name));
        }
        let id = self.nodes.len();
        self.nodes.push(DiseaseNode {
            name: name.clone(),
            parent,
            children: Vec::new(),
        });
        self.by_name.insert(name.clone(), id);
        self.by_lower_name.entry(name.to_lowercase()).or_insert(id);
        path.push(name);
        for child in &node.children {
            let child_id = self.add(child, Some(id), path)?;
            self.nodes[id].children.push(child_id);
        }
        path.pop();
        Ok(id)
    }

    /// The file this taxonomy was loaded from, byte for byte.
    pub fn source_json(&self) -> &str {
        &self.source
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[DiseaseNode] {
        &self.nodes
    }

    pub fn roots(&self) -> impl Iterator<Item = &str> {
        self.roots.iter().map(|&id| self.nodes[id].name.as_str())
    }

    pub fn contains(&self, name: &str) -> bool {
        self.by_name.contains_key(name)
    }

    /// Canonical spelling of `name`, matched exactly first, then ignoring case.
    pub fn resolve(&self, name: &str) -> Option<&str> {
        let name = name.trim();
        self.by_name
            .get(name)
            .or_else(|| self.by_lower_name.get(&name.to_lowercase()))
            .map(|&id| self.nodes[id].name.as_str())
    }

    fn id(&self, name: &str) -> Result<usize, TaxonomyError> {
        self.by_name
            .get(name)
            .copied()
            .ok_or_else(|| TaxonomyError::UnknownLabel(name.to_string()))
    }

    pub fn is_leaf(&self, name: &str) -> Result<bool, TaxonomyError> {
        Ok(self.nodes[self.id(name)?].children.is_empty())
    }

    pub fn parent(&self, name: &str) -> Result<Option<&str>, TaxonomyError> {
        Ok(self.nodes[self.id(name)?]
            .parent
            .map(|p| self.nodes[p].name.as_str()))
    }

    /// Terminal nodes in depth-first document order.
    pub fn leaves(&self) -> Vec<&str> {
        let mut out = Vec::new();
        let mut stack: Vec<usize> = self.roots.iter().rev().copied().collect();
        while let Some(id) = stack.pop() {
            let node = &self.nodes[id];
            if node.children.is_empty() {
                out.push(node.name.as_str());
            }
            stack.extend(node.children.iter().rev());
        }
        out
    }

    /// Parent of a leaf, or the leaf itself when it is a root.
    pub fn upper_of(&self, leaf: &str) -> Result<&str, TaxonomyError> {
        let node = &self.nodes[self.id(leaf)?];
        if !node.children.is_empty() {
            return Err(TaxonomyError::NotALeaf(leaf.to_string()));
        }
        Ok(match node.parent {
            Some(parent) => self.nodes[parent].name.as_str(),
            None => node.name.as_str(),
        })
    }

    /// Distinct upper labels, in order of first appearance over the leaves.
    pub fn uppers(&self) -> Vec<&str> {
        let mut seen = BTreeSet::new();
        self.leaves()
            .into_iter()
            .map(|leaf| self.upper_of(leaf).expect("leaf"))
            .filter(|upper| seen.insert(*upper))
            .collect()
    }

    /// Every class of `space`. Status-aware spaces cross each name with the
    /// three statuses, except `No Finding`, which only exists as `Present`.
    pub fn class_universe(&self, space: LabelSpace) -> Vec<ClassLabel> {
        let names = if space.is_upper() {
            self.uppers()
        } else {
            self.leaves()
        };
        if !space.with_status() {
            return names.into_iter().map(ClassLabel::plain).collect();
        }
        names
            .into_iter()
            .flat_map(|name| {
                let statuses: &[Status] = if name == NO_FINDING {
                    &[Status::Present]
                } else {
                    &Status::ALL
                };
                statuses
                    .iter()
                    .map(move |&status| ClassLabel::with_status(name, status))
            })
            .collect()
    }

    /// Checks that every disease of `labels` is a leaf of this taxonomy.
    pub fn check_labels(&self, labels: &LabelSet) -> Result<(), TaxonomyError> {
        for disease in labels.diseases() {
            if !self.is_leaf(disease)? {
                return Err(TaxonomyError::NotALeaf(disease.to_string()));
            }
        }
        Ok(())
    }

    /// Projects leaf annotations into `space`.
    ///
    /// Upper spaces replace every leaf by its upper label; duplicates merge,
    /// keeping the highest status (`Present > Uncertain > Absent`).
    pub fn project(&self, labels: &LabelSet, space: LabelSpace) -> Result<ClassSet, TaxonomyError> {
        let mut merged: BTreeMap<&str, Status> = BTreeMap::new();
        for label in labels.iter() {
            let id = self.id(&label.disease)?;
            let node = &self.nodes[id];
            if !node.children.is_empty() {
                return Err(TaxonomyError::NotALeaf(label.disease.clone()));
            }
            let name = if space.is_upper() {
                self.upper_of(&node.name)?
            } else {
                node.name.as_str()
            };
            merged
                .entry(name)
                .and_modify(|s| *s = s.merge(label.status))
                .or_insert(label.status);
        }
        Ok(merged
            .into_iter()
            .map(|(name, status)| ClassLabel {
                name: name.to_string(),
                status: space.with_status().then_some(status),
            })
            .collect())
    }
}

/// Configurable projection from taxonomy nodes onto the CheXbert classes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChexbertMapping {
    entries: BTreeMap<String, BTreeSet<String>>,
}

/// Result of [`ChexbertMapping::map_to_chexbert`]; diseases without a mapping
/// entry are reported rather than treated as errors.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ChexbertProjection {
    pub classes: BTreeSet<String>,
    pub unmapped: Vec<String>,
}

impl ChexbertMapping {
    /// Best-effort default mapping shipped in `data/chexbert_mapping.json`.
    pub fn bundled() -> ChexbertMapping {
        ChexbertMapping::from_json(BUNDLED_CHEXBERT_MAPPING, Some(&Taxonomy::bundled()))
            .expect("bundled mapping is valid")
    }

    pub fn load(path: &Path, taxonomy: Option<&Taxonomy>) -> Result<ChexbertMapping, TaxonomyError> {
        let text = std::fs::read_to_string(path).map_err(|source| TaxonomyError::Io {
            path: path.display().to_string(),
            source,
        })?;
        ChexbertMapping::from_json(&text, taxonomy)
    }

    /// Parses `{"<taxonomy name>": ["<chexbert class>", ...]}`. When a
    /// taxonomy is given, every key must be one of its nodes.
    pub fn from_json(text: &str, taxonomy: Option<&Taxonomy>) -> Result<ChexbertMapping, TaxonomyError> {
        let raw: BTreeMap<String, Vec<String>> = serde_json::from_str(text)?;
        let mut entries = BTreeMap::new();
        for (disease, classes) in raw {
            if let Some(taxonomy) = taxonomy {
                if !taxonomy.contains(&disease) {
                    return Err(TaxonomyError::UnknownLabel(disease));
                }
            }
            for class in &classes {
                if !CHEXBERT_CLASSES.contains(&class.as_str()) {
                    return Err(TaxonomyError::UnknownChexbertClass {
                        disease: disease.clone(),
                        class: class.clone(),
                    });
                }
            }
            entries.insert(disease, classes.into_iter().collect());
        }
        Ok(ChexbertMapping { entries })
    }

    pub fn targets(&self, disease: &str) -> Option<&BTreeSet<String>> {
        self.entries.get(disease)
    }

    /// Union of the mapped classes of every disease in `labels`, regardless
    /// of status.
    pub fn map_to_chexbert(&self, labels: &LabelSet) -> ChexbertProjection {
        self.map_filtered(labels, |_| true)
    }

    /// Like [`Self::map_to_chexbert`], keeping only labels whose status passes `keep`.
    pub fn map_filtered(&self, labels: &LabelSet, keep: impl Fn(Status) -> bool) -> ChexbertProjection {
        let mut out = ChexbertProjection::default();
        for label in labels.iter().filter(|l| keep(l.status)) {
            match self.entries.get(&label.disease) {
                Some(classes) => out.classes.extend(classes.iter().cloned()),
                None => out.unmapped.push(label.disease),
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(items: &[(&str, Status)]) -> LabelSet {
        items.iter().map(|&(d, s)| (d, s)).collect()
    }

    fn plain(names: &[&str]) -> ClassSet {
        names.iter().map(|n| ClassLabel::plain(*n)).collect()
    }

    #[test]
    fn bundled_tree_shape() {
        let tax = Taxonomy::bundled();
        assert_eq!(tax.roots().count(), 8);
        assert_eq!(tax.leaves().len(), 54);
        assert_eq!(tax.uppers().len(), 23);
        assert_eq!(tax.leaves()[0], NO_FINDING);
        assert_eq!(tax.leaves()[1], "Edema");
    }

    #[test]
    fn upper_of_examples() {
        let tax = Taxonomy::bundled();
        assert_eq!(tax.upper_of("Pneumonia").unwrap(), "Consolidation");
        assert_eq!(tax.upper_of("Edema").unwrap(), "Diffuse air space opacity");
        assert_eq!(tax.upper_of(NO_FINDING).unwrap(), NO_FINDING);
        assert!(matches!(
            tax.upper_of("Consolidation"),
            Err(TaxonomyError::NotALeaf(_))
        ));
        assert!(matches!(
            tax.upper_of("Fog"),
            Err(TaxonomyError::UnknownLabel(_))
        ));
    }

    #[test]
    fn single_node_is_its_own_upper() {
        let tax = Taxonomy::from_json(r#"{"name":"No Finding"}"#).unwrap();
        assert_eq!(tax.leaves(), vec![NO_FINDING]);
        assert_eq!(tax.upper_of(NO_FINDING).unwrap(), NO_FINDING);
    }

    #[test]
    fn loader_rejects_bad_trees() {
        let dup = r#"[{"name":"Edema"},{"name":"Lung","children":[{"name":"Edema"}]}]"#;
        assert!(matches!(
            Taxonomy::from_json(dup),
            Err(TaxonomyError::DuplicateName(n)) if n == "Edema"
        ));
        let cycle = r#"{"name":"A","children":[{"name":"B","children":[{"name":"A"}]}]}"#;
        assert!(matches!(
            Taxonomy::from_json(cycle),
            Err(TaxonomyError::CycleDetected(n)) if n == "A"
        ));
        assert!(matches!(
            Taxonomy::from_json("[]"),
            Err(TaxonomyError::EmptyTree)
        ));
        assert!(matches!(
            Taxonomy::from_json(r#"{"nom":"x"}"#),
            Err(TaxonomyError::Json(_))
        ));
    }

    #[test]
    fn projection_examples() {
        let tax = Taxonomy::bundled();
        let labels = set(&[("Pneumonia", Status::Present), ("Atelectasis", Status::Present)]);
        assert_eq!(
            tax.project(&labels, LabelSpace::Upper).unwrap(),
            plain(&["Consolidation"])
        );
        assert_eq!(
            tax.project(&labels, LabelSpace::Leaves).unwrap(),
            plain(&["Atelectasis", "Pneumonia"])
        );
        let mixed = set(&[("Pneumonia", Status::Uncertain), ("Atelectasis", Status::Present)]);
        assert_eq!(
            tax.project(&mixed, LabelSpace::UpperWithStatus).unwrap(),
            [ClassLabel::with_status("Consolidation", Status::Present)]
                .into_iter()
                .collect()
        );
        for space in LabelSpace::ALL {
            assert!(tax.project(&LabelSet::new(), space).unwrap().is_empty());
        }
        let unknown = set(&[("Fog", Status::Present)]);
        assert!(matches!(
            tax.project(&unknown, LabelSpace::Leaves),
            Err(TaxonomyError::UnknownLabel(_))
        ));
    }

    #[test]
    fn no_finding_is_always_present() {
        let labels = set(&[(NO_FINDING, Status::Absent)]);
        assert_eq!(labels.status(NO_FINDING), Some(Status::Present));
    }

    #[test]
    fn status_space_sizes() {
        let tax = Taxonomy::bundled();
        assert_eq!(tax.class_universe(LabelSpace::Leaves).len(), 54);
        assert_eq!(tax.class_universe(LabelSpace::LeavesWithStatus).len(), 53 * 3 + 1);
        assert_eq!(tax.class_universe(LabelSpace::UpperWithStatus).len(), 22 * 3 + 1);
    }

    #[test]
    fn resolve_ignores_case() {
        let tax = Taxonomy::bundled();
        assert_eq!(tax.resolve("pleural effusion"), Some("Pleural Effusion"));
        assert_eq!(tax.resolve("Emphysema"), Some("Emphysema"));
        assert_eq!(tax.resolve("Fog"), None);
    }

    #[test]
    fn chexbert_mapping() {
        let tax = Taxonomy::bundled();
        let mapping = ChexbertMapping::from_json(
            r#"{"Cardiomegaly":["Cardiomegaly"],"Pneumonia":["Pneumonia","Consolidation"]}"#,
            Some(&tax),
        )
        .unwrap();
        let out = mapping.map_to_chexbert(&set(&[("Cardiomegaly", Status::Present)]));
        assert_eq!(out.classes, ["Cardiomegaly".to_string()].into_iter().collect());
        assert!(mapping.map_to_chexbert(&LabelSet::new()).classes.is_empty());
        let out = mapping.map_to_chexbert(&set(&[
            ("Pneumonia", Status::Present),
            ("Emphysema", Status::Present),
        ]));
        assert_eq!(out.classes.len(), 2);
        assert_eq!(out.unmapped, vec!["Emphysema".to_string()]);

        let bad = ChexbertMapping::from_json(r#"{"Edema":["Wet lung"]}"#, Some(&tax));
        assert!(matches!(bad, Err(TaxonomyError::UnknownChexbertClass { .. })));
        let bad = ChexbertMapping::from_json(r#"{"Fog":["Edema"]}"#, Some(&tax));
        assert!(matches!(bad, Err(TaxonomyError::UnknownLabel(_))));
        assert!(!ChexbertMapping::bundled().entries.is_empty());
    }

    #[test]
    fn label_set_wire_format() {
        let labels = set(&[("Edema", Status::Uncertain)]);
        let json = serde_json::to_string(&labels).unwrap();
        assert_eq!(json, r#"[{"disease":"Edema","status":"Uncertain"}]"#);
        let back: LabelSet = serde_json::from_str(&json).unwrap();
        assert_eq!(back, labels);
    }
}
