//! Utterances: one findings bullet or one numbered impression item, verbatim.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::report::{AnatomicCategory, StructuredReport};

/// Position of an utterance inside its report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Origin {
    /// `index` is the 0-based bullet position within the category.
    Finding {
        category: AnatomicCategory,
        index: usize,
    },
    /// `rank` is the 1-based impression number.
    Impression { rank: u32 },
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Origin::Finding { category, index } => write!(f, "findings/{category}/{index}"),
            Origin::Impression { rank } => write!(f, "impression/{rank}"),
        }
    }
}

impl FromStr for Origin {
    type Err = String;

    /// Inverse of `Display`: `findings/<category>/<index>` or `impression/<rank>`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || format!("malformed utterance origin {s:?}");
        if let Some(rank) = s.strip_prefix("impression/") {
            let rank: u32 = rank.parse().map_err(|_| bad())?;
            return (rank >= 1)
                .then_some(Origin::Impression { rank })
                .ok_or_else(bad);
        }
        let rest = s.strip_prefix("findings/").ok_or_else(bad)?;
        let (category, index) = rest.rsplit_once('/').ok_or_else(bad)?;
        Ok(Origin::Finding {
            category: AnatomicCategory::from_header(category).ok_or_else(bad)?,
            index: index.parse().map_err(|_| bad())?,
        })
    }
}

// Wire form: {"kind": "finding"|"impression", "category"?: header, "index": n}
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct OriginWire {
    kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    category: Option<AnatomicCategory>,
    index: usize,
}

impl Serialize for Origin {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let wire = match *self {
            Origin::Finding { category, index } => OriginWire {
                kind: "finding".into(),
                category: Some(category),
                index,
            },
            Origin::Impression { rank } => OriginWire {
                kind: "impression".into(),
                category: None,
                index: rank as usize,
            },
        };
        wire.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Origin {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        let wire = OriginWire::deserialize(deserializer)?;
        match (wire.kind.as_str(), wire.category) {
            ("finding", Some(category)) => Ok(Origin::Finding {
                category,
                index: wire.index,
            }),
            ("finding", None) => Err(D::Error::custom("finding origin requires a category")),
            ("impression", None) if wire.index >= 1 => Ok(Origin::Impression {
                rank: wire.index as u32,
            }),
            ("impression", None) => Err(D::Error::custom("impression rank starts at 1")),
            ("impression", Some(_)) => {
                Err(D::Error::custom("impression origin takes no category"))
            }
            (other, _) => Err(D::Error::custom(format!("unknown origin kind {other:?}"))),
        }
    }
}

/// Corpus-wide identity of an utterance.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct UtteranceKey {
    pub study_id: String,
    pub origin: Origin,
}

impl fmt::Display for UtteranceKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}#{}", self.study_id, self.origin)
    }
}

impl FromStr for UtteranceKey {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (study_id, origin) = s
            .rsplit_once('#')
            .ok_or_else(|| format!("utterance id {s:?} lacks '#'"))?;
        if study_id.is_empty() {
            return Err(format!("utterance id {s:?} has an empty study id"));
        }
        Ok(UtteranceKey {
            study_id: study_id.to_string(),
            origin: origin.parse()?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Utterance {
    pub study_id: String,
    pub origin: Origin,
    pub text: String,
}

impl Utterance {
    pub fn key(&self) -> UtteranceKey {
        UtteranceKey {
            study_id: self.study_id.clone(),
            origin: self.origin,
        }
    }
}

/// Lists every findings bullet (document order) followed by every impression
/// item (rank order).
pub fn extract_utterances(study_id: &str, report: &StructuredReport) -> Vec<Utterance> {
    let findings = report.findings.iter().flatten().flat_map(|group| {
        group
            .observations
            .iter()
            .enumerate()
            .map(move |(index, obs)| Utterance {
                study_id: study_id.to_string(),
                origin: Origin::Finding {
                    category: group.category,
                    index,
                },
                text: obs.text().to_string(),
            })
    });
    let impression = report.impression_items().iter().map(|item| Utterance {
        study_id: study_id.to_string(),
        origin: Origin::Impression { rank: item.rank() },
        text: item.text().to_string(),
    });
    findings.chain(impression).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::report::{parse_report, ParseMode};

    #[test]
    fn bullets_then_impression() {
        let text = "Findings:\nPleura:\n- a\n- b\n- c\nImpression:\n1. d\n2. e";
        let report = parse_report(text, ParseMode::Strict).unwrap().report;
        let utts = extract_utterances("s1", &report);
        assert_eq!(utts.len(), 5);
        let origins: Vec<Origin> = utts.iter().map(|u| u.origin).collect();
        let pleura = |index| Origin::Finding {
            category: AnatomicCategory::Pleura,
            index,
        };
        assert_eq!(
            origins,
            vec![
                pleura(0),
                pleura(1),
                pleura(2),
                Origin::Impression { rank: 1 },
                Origin::Impression { rank: 2 }
            ]
        );
        assert_eq!(utts[3].text, "d");
    }

    #[test]
    fn impression_only() {
        let report = StructuredReport::with_impression(&["No acute process."]).unwrap();
        let utts = extract_utterances("s", &report);
        assert_eq!(utts.len(), 1);
        assert_eq!(utts[0].origin, Origin::Impression { rank: 1 });
    }

    #[test]
    fn key_display_round_trip() {
        for origin in [
            Origin::Impression { rank: 4 },
            Origin::Finding {
                category: AnatomicCategory::TubesCathetersAndSupportDevices,
                index: 0,
            },
        ] {
            let key = UtteranceKey {
                study_id: "s#1".into(),
                origin,
            };
            assert_eq!(key.to_string().parse::<UtteranceKey>().unwrap(), key);
        }
        assert!("s#impression/0".parse::<UtteranceKey>().is_err());
        assert!("s#findings/Lungs/1".parse::<UtteranceKey>().is_err());
        assert!("#impression/1".parse::<UtteranceKey>().is_err());
    }

    #[test]
    fn origin_wire_format() {
        let origin = Origin::Finding {
            category: AnatomicCategory::TubesCathetersAndSupportDevices,
            index: 2,
        };
        let json = serde_json::to_string(&origin).unwrap();
        assert_eq!(
            json,
            r#"{"kind":"finding","category":"Tubes, Catheters, and Support Devices","index":2}"#
        );
        assert_eq!(serde_json::from_str::<Origin>(&json).unwrap(), origin);
        let imp: Origin = serde_json::from_str(r#"{"kind":"impression","index":3}"#).unwrap();
        assert_eq!(imp, Origin::Impression { rank: 3 });
        assert!(serde_json::from_str::<Origin>(r#"{"kind":"impression","index":0}"#).is_err());
        assert!(serde_json::from_str::<Origin>(r#"{"kind":"finding","index":0}"#).is_err());
    }
}
