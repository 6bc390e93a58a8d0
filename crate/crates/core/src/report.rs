//! Report structuring: turning report text (or an external structurer's
//! output file) into [`StructuredFinding`] tuples, and mapping free-text
//! location phrases onto the ten anatomical labels.
//!
//! The built-in structurer accepts a deliberately small sentence grammar:
//!
//! | form | example |
//! |------|---------|
//! | `<LOCATION> <LESION>.` | `Bibasilar atelectasis.` |
//! | `<LESION> in the <LOCATION>.` | `Effusion in the left lung base.` |
//! | `The <LOCATION> opacity is <LESION>.` | `The lower lung opacity is pneumonia.` |
//! | `No <LESION>.` | `No pneumonia.` |
//! | `Cardiomegaly.` | whole-organ finding, no location |
//!
//! Hedge cues (`possibly`, `may represent`, `suggestive of`) mark a finding
//! tentative. A few normal-study sentences (`No acute findings.`) are
//! recognised and produce no finding. Anything else is rejected.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde_json::Value;
use thiserror::Error;

use crate::io::FormatError;
use crate::model::{AnatomicalLabel, Certainty, LesionType, Presence, StructuredFinding};

const DEFAULT_LEXICON: &str = include_str!("../data/lexicon.tsv");

#[derive(Debug, Error)]
pub enum ReportError {
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error("{path}: expected a JSON array of findings")]
    NotAnArray { path: String },
    #[error("record {index}, field `{field}`: {message}")]
    Record {
        index: usize,
        field: &'static str,
        message: String,
    },
    #[error("sentences outside the report grammar: {}", list_sentences(.0))]
    OutsideGrammar(Vec<(u32, String)>),
    #[error("lexicon line {line}: {message}")]
    Lexicon { line: usize, message: String },
}

fn list_sentences(s: &[(u32, String)]) -> String {
    s.iter()
        .map(|(i, t)| format!("#{i} \"{t}\""))
        .collect::<Vec<_>>()
        .join(", ")
}

/// Phrase → label-set table used for location mapping.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LocationLexicon {
    entries: BTreeMap<String, BTreeSet<AnatomicalLabel>>,
}

impl Default for LocationLexicon {
    fn default() -> Self {
        Self::parse(DEFAULT_LEXICON).expect("shipped lexicon parses")
    }
}

impl LocationLexicon {
    /// Parses `phrase<TAB>label[,label...]` lines; `#` starts a comment line.
    pub fn parse(text: &str) -> Result<Self, ReportError> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim_end();
            if line.trim().is_empty() || line.trim_start().starts_with('#') {
                continue;
            }
            let err = |message: String| ReportError::Lexicon {
                line: i + 1,
                message,
            };
            let (phrase, labels) = line
                .split_once('\t')
                .ok_or_else(|| err("expected `phrase<TAB>labels`".into()))?;
            let phrase = normalize_phrase(phrase);
            if phrase.is_empty() {
                return Err(err("empty phrase".into()));
            }
            let mut set = BTreeSet::new();
            for label in labels.split(',') {
                set.insert(label.parse::<AnatomicalLabel>().map_err(|e| err(e.to_string()))?);
            }
            entries.insert(phrase, set);
        }
        Ok(Self { entries })
    }

    pub fn load(path: &Path) -> Result<Self, ReportError> {
        let text = fs::read_to_string(path).map_err(|e| FormatError::io(path, e))?;
        Self::parse(&text)
    }

    pub fn lookup(&self, phrase: &str) -> Option<&BTreeSet<AnatomicalLabel>> {
        self.entries.get(&normalize_phrase(phrase))
    }

    pub fn phrases(&self) -> impl Iterator<Item = (&str, &BTreeSet<AnatomicalLabel>)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

fn normalize_phrase(p: &str) -> String {
    let lowered = p.trim().to_lowercase();
    let words: Vec<&str> = lowered.split_whitespace().collect();
    let words = match words.first() {
        Some(&"the") => &words[1..],
        _ => &words[..],
    };
    words.join(" ")
}

/// Result of mapping location phrases: recognised labels plus phrases the
/// lexicon does not know.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LocationMapping {
    pub labels: BTreeSet<AnatomicalLabel>,
    pub unknown: Vec<String>,
}

/// Union of the lexicon entries for `phrases`; unknown phrases are returned,
/// not dropped.
pub fn map_locations<S: AsRef<str>>(phrases: &[S], lexicon: &LocationLexicon) -> LocationMapping {
    let mut out = LocationMapping::default();
    for p in phrases {
        match lexicon.lookup(p.as_ref()) {
            Some(labels) => out.labels.extend(labels.iter().copied()),
            None => out.unknown.push(p.as_ref().trim().to_string()),
        }
    }
    out
}

/// Loads an external structurer's output: a JSON array of six-field objects.
pub fn load_external_findings(path: &Path) -> Result<Vec<StructuredFinding>, ReportError> {
    let text = fs::read_to_string(path).map_err(|e| FormatError::io(path, e))?;
    parse_external_findings(&text).map_err(|e| match e {
        ReportError::NotAnArray { .. } => ReportError::NotAnArray {
            path: path.display().to_string(),
        },
        ReportError::Format(FormatError::Json { message, .. }) => {
            ReportError::Format(FormatError::json(path, message))
        }
        other => other,
    })
}

pub fn parse_external_findings(text: &str) -> Result<Vec<StructuredFinding>, ReportError> {
    let value: Value = serde_json::from_str(text)
        .map_err(|e| ReportError::Format(FormatError::json(Path::new("<findings>"), e)))?;
    let Value::Array(records) = value else {
        return Err(ReportError::NotAnArray {
            path: "<findings>".into(),
        });
    };
    records
        .iter()
        .enumerate()
        .map(|(index, rec)| parse_record(index, rec))
        .collect()
}

fn parse_record(index: usize, rec: &Value) -> Result<StructuredFinding, ReportError> {
    let err = |field: &'static str, message: String| ReportError::Record {
        index,
        field,
        message,
    };
    let obj = rec
        .as_object()
        .ok_or_else(|| err("<record>", "expected an object".into()))?;
    let get = |field: &'static str| {
        obj.get(field)
            .ok_or_else(|| err(field, "missing".into()))
    };
    fn decode<T: serde::de::DeserializeOwned>(v: &Value) -> Result<T, String> {
        serde_json::from_value(v.clone()).map_err(|e| e.to_string())
    }

    let entity: String = decode(get("entity")?).map_err(|m| err("entity", m))?;
    let sentence_index: u32 = decode(get("sentence_index")?).map_err(|m| err("sentence_index", m))?;
    let presence: Presence = decode(get("presence")?).map_err(|m| err("presence", m))?;
    let certainty: Certainty = decode(get("certainty")?).map_err(|m| err("certainty", m))?;
    let reported_locations: BTreeSet<AnatomicalLabel> =
        decode(get("reported_locations")?).map_err(|m| err("reported_locations", m))?;
    let predicted_lesion: Option<LesionType> = match obj.get("predicted_lesion") {
        None | Some(Value::Null) => None,
        Some(v) => Some(decode(v).map_err(|m| err("predicted_lesion", m))?),
    };
    let finding = StructuredFinding {
        entity,
        sentence_index,
        presence,
        certainty,
        reported_locations,
        predicted_lesion,
    };
    finding
        .validate()
        .map_err(|v| err(v.field, v.message))?;
    Ok(finding)
}

/// Output of the rule-based structurer.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StructuredReport {
    pub findings: Vec<StructuredFinding>,
    /// `(sentence_index, phrase)` for location phrases the lexicon could not
    /// map. A positive finding whose phrases were all unknown is left out of
    /// `findings` and only appears here.
    pub unmapped: Vec<(u32, String)>,
}

/// Entity surface forms → canonical entity text.
const ENTITIES: &[(&str, &str)] = &[
    ("pleural effusions", "effusion"),
    ("pleural effusion", "effusion"),
    ("effusions", "effusion"),
    ("effusion", "effusion"),
    ("pulmonary edema", "edema"),
    ("edema", "edema"),
    ("atelectasis", "atelectasis"),
    ("pneumonia", "pneumonia"),
    ("consolidations", "consolidation"),
    ("consolidation", "consolidation"),
    ("opacities", "opacity"),
    ("opacity", "opacity"),
    ("cardiomegaly", "cardiomegaly"),
    // Findings outside the seven types still count as reported lesions.
    ("pneumothorax", "pneumothorax"),
    ("nodules", "nodule"),
    ("nodule", "nodule"),
    ("mass", "mass"),
    ("fibrosis", "fibrosis"),
    ("scarring", "scarring"),
];

const NORMAL_SENTENCES: &[&str] = &[
    "no acute findings",
    "no acute cardiopulmonary process",
    "no acute cardiopulmonary abnormality",
    "lungs are clear",
    "the lungs are clear",
    "heart size is normal",
    "the heart size is normal",
];

const HEDGES_INFIX: &[&str] = &[" is possibly ", " may represent ", " is suggestive of ", " suggestive of "];

fn entity(text: &str) -> Option<&'static str> {
    ENTITIES
        .iter()
        .find(|(surface, _)| *surface == text)
        .map(|(_, canon)| *canon)
}

/// Longest entity surface form that `text` ends with, as `(prefix, canonical)`.
fn split_trailing_entity(text: &str) -> Option<(&str, &'static str)> {
    let mut best: Option<(&str, &'static str, usize)> = None;
    for (surface, canon) in ENTITIES {
        if let Some(prefix) = text.strip_suffix(surface) {
            let boundary = prefix.is_empty() || prefix.ends_with(' ');
            if boundary && best.is_none_or(|(_, _, len)| surface.len() > len) {
                best = Some((prefix.trim_end(), canon, surface.len()));
            }
        }
    }
    best.map(|(p, c, _)| (p, c))
}

fn split_location_phrases(loc: &str) -> Vec<String> {
    loc.split(" and ")
        .flat_map(|p| p.split(", "))
        .map(normalize_phrase)
        .filter(|p| !p.is_empty())
        .collect()
}

/// Splits report text into sentences on `.`, `!`, `?` and line breaks.
pub fn split_sentences(report: &str) -> Vec<String> {
    report
        .split(['.', '!', '?', '\n'])
        .map(|s| s.split_whitespace().collect::<Vec<_>>().join(" "))
        .filter(|s| !s.is_empty())
        .collect()
}

enum Parsed {
    Normal,
    Finding {
        entity: &'static str,
        presence: Presence,
        certainty: Certainty,
        locations: Option<String>,
        predicted: Option<LesionType>,
    },
}

fn parse_sentence(sentence: &str) -> Option<Parsed> {
    let mut s = sentence.to_lowercase().replace(',', "");
    if NORMAL_SENTENCES.contains(&s.as_str()) {
        return Some(Parsed::Normal);
    }

    let mut certainty = Certainty::Definitive;
    if let Some(rest) = s.strip_prefix("possibly ") {
        certainty = Certainty::Tentative;
        s = rest.to_string();
    }
    for cue in HEDGES_INFIX {
        if s.contains(cue) {
            certainty = Certainty::Tentative;
            s = s.replacen(cue, " is ", 1);
        }
    }

    if let Some(rest) = s.strip_prefix("no ") {
        let (ent, loc) = match rest.split_once(" in the ") {
            Some((e, l)) => (e, Some(l.to_string())),
            None => (rest, None),
        };
        return Some(Parsed::Finding {
            entity: entity(ent)?,
            presence: Presence::Negative,
            certainty,
            locations: loc,
            predicted: None,
        });
    }

    let body = s.strip_prefix("the ").unwrap_or(&s);
    if let Some((loc, lesion)) = body.split_once(" opacity is ") {
        let predicted = entity(lesion)?.parse::<LesionType>().ok()?;
        return Some(Parsed::Finding {
            entity: "opacity",
            presence: Presence::Positive,
            certainty,
            locations: Some(loc.to_string()),
            predicted: Some(predicted),
        });
    }

    if let Some((ent, loc)) = s.split_once(" in the ") {
        return Some(Parsed::Finding {
            entity: entity(ent)?,
            presence: Presence::Positive,
            certainty,
            locations: Some(loc.to_string()),
            predicted: None,
        });
    }

    let (loc, ent) = split_trailing_entity(&s)?;
    let loc = (!loc.is_empty()).then(|| loc.to_string());
    if loc.is_none() && ent != "cardiomegaly" {
        return None;
    }
    Some(Parsed::Finding {
        entity: ent,
        presence: Presence::Positive,
        certainty,
        locations: loc,
        predicted: None,
    })
}

/// Rule-based structurer for the constrained grammar. Every sentence must
/// parse; all offending sentences are reported together.
pub fn structure_report(
    report: &str,
    lexicon: &LocationLexicon,
) -> Result<StructuredReport, ReportError> {
    let mut out = StructuredReport::default();
    let mut bad = Vec::new();
    for (i, sentence) in split_sentences(report).iter().enumerate() {
        let sentence_index = i as u32 + 1;
        let Some(parsed) = parse_sentence(sentence) else {
            bad.push((sentence_index, sentence.clone()));
            continue;
        };
        let Parsed::Finding {
            entity,
            presence,
            certainty,
            locations,
            predicted,
        } = parsed
        else {
            continue;
        };
        let phrases = locations.as_deref().map(split_location_phrases).unwrap_or_default();
        let mapping = map_locations(&phrases, lexicon);
        out.unmapped
            .extend(mapping.unknown.iter().map(|p| (sentence_index, p.clone())));
        let finding = StructuredFinding {
            entity: entity.to_string(),
            sentence_index,
            presence,
            certainty,
            reported_locations: mapping.labels,
            predicted_lesion: predicted,
        };
        if finding.validate().is_ok() {
            out.findings.push(finding);
        }
    }
    if bad.is_empty() {
        Ok(out)
    } else {
        Err(ReportError::OutsideGrammar(bad))
    }
}
