//! Shared domain vocabulary: anatomical labels, lesion types, structured
//! findings, detections, grounded lesions and instruction-answer pairs.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::mask::RasterMask;

/// Parsing a closed vocabulary term failed.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown {kind} `{value}`")]
pub struct UnknownTerm {
    pub kind: &'static str,
    pub value: String,
}

/// Closed text enumerations with a fixed spelling on the wire.
macro_rules! text_enum {
    (
        $(#[$meta:meta])*
        $name:ident ($kind:literal) { $($variant:ident => $text:literal),+ $(,)? }
    ) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
        pub enum $name {
            $($variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn as_str(self) -> &'static str {
                match self {
                    $($name::$variant => $text),+
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $name {
            type Err = UnknownTerm;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                let norm = s.trim().to_ascii_lowercase();
                match norm.as_str() {
                    $($text => Ok($name::$variant),)+
                    _ => Err(UnknownTerm { kind: $kind, value: s.to_string() }),
                }
            }
        }

        impl Serialize for $name {
            fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                s.serialize_str(self.as_str())
            }
        }

        impl<'de> Deserialize<'de> for $name {
            fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
                let s = String::deserialize(d)?;
                s.parse().map_err(serde::de::Error::custom)
            }
        }
    };
}

text_enum! {
    /// The ten valid target locations. Declaration order is the canonical
    /// phrase order: right before left, broad region first, then apical to base.
    AnatomicalLabel("anatomical label") {
        RightLung => "right lung",
        RightApicalZone => "right apical zone",
        RightUpperZone => "right upper zone lung",
        RightMidZone => "right mid zone lung",
        RightLungBase => "right lung base",
        LeftLung => "left lung",
        LeftApicalZone => "left apical zone",
        LeftUpperZone => "left upper zone lung",
        LeftMidZone => "left mid zone lung",
        LeftLungBase => "left lung base",
    }
}

text_enum! {
    LesionType("lesion type") {
        Cardiomegaly => "cardiomegaly",
        Pneumonia => "pneumonia",
        Atelectasis => "atelectasis",
        Opacity => "opacity",
        Consolidation => "consolidation",
        Edema => "edema",
        Effusion => "effusion",
    }
}

text_enum! {
    Presence("presence") {
        Positive => "positive",
        Negative => "negative",
    }
}

text_enum! {
    Certainty("certainty") {
        Definitive => "definitive",
        Tentative => "tentative",
    }
}

text_enum! {
    Split("split") {
        Train => "train",
        Validation => "validation",
        Test => "test",
    }
}

text_enum! {
    TemplateType("template type") {
        Basic => "basic",
        Global => "global",
        LesionInference => "lesion_inference",
    }
}

text_enum! {
    Polarity("polarity") {
        Positive => "positive",
        Negative => "negative",
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Side {
    Right,
    Left,
}

/// Horizontal lung band, top to bottom.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Zone {
    Apical,
    Upper,
    Mid,
    Base,
}

impl Zone {
    pub const ALL: [Zone; 4] = [Zone::Apical, Zone::Upper, Zone::Mid, Zone::Base];

    /// Band index from the top of the lung, `0..4`.
    pub fn band(self) -> u32 {
        self as u32
    }
}

impl AnatomicalLabel {
    pub fn side(self) -> Side {
        use AnatomicalLabel::*;
        match self {
            RightLung | RightApicalZone | RightUpperZone | RightMidZone | RightLungBase => {
                Side::Right
            }
            _ => Side::Left,
        }
    }

    /// `None` for the broad whole-lung labels.
    pub fn zone(self) -> Option<Zone> {
        use AnatomicalLabel::*;
        match self {
            RightApicalZone | LeftApicalZone => Some(Zone::Apical),
            RightUpperZone | LeftUpperZone => Some(Zone::Upper),
            RightMidZone | LeftMidZone => Some(Zone::Mid),
            RightLungBase | LeftLungBase => Some(Zone::Base),
            RightLung | LeftLung => None,
        }
    }

    pub fn from_parts(side: Side, zone: Option<Zone>) -> Self {
        use AnatomicalLabel::*;
        match (side, zone) {
            (Side::Right, None) => RightLung,
            (Side::Right, Some(Zone::Apical)) => RightApicalZone,
            (Side::Right, Some(Zone::Upper)) => RightUpperZone,
            (Side::Right, Some(Zone::Mid)) => RightMidZone,
            (Side::Right, Some(Zone::Base)) => RightLungBase,
            (Side::Left, None) => LeftLung,
            (Side::Left, Some(Zone::Apical)) => LeftApicalZone,
            (Side::Left, Some(Zone::Upper)) => LeftUpperZone,
            (Side::Left, Some(Zone::Mid)) => LeftMidZone,
            (Side::Left, Some(Zone::Base)) => LeftLungBase,
        }
    }

    /// File stem used for anatomy mask PNGs, e.g. `right_lung_base`.
    pub fn file_stem(self) -> String {
        self.as_str().replace(' ', "_")
    }
}

impl LesionType {
    /// Lesions that get an opacity-type inference instruction.
    pub fn is_inference_target(self) -> bool {
        matches!(
            self,
            LesionType::Pneumonia | LesionType::Atelectasis | LesionType::Edema
        )
    }

    /// Hyperintense parenchymal findings that are all kinds of opacity.
    pub fn is_opacity_family(self) -> bool {
        matches!(
            self,
            LesionType::Pneumonia
                | LesionType::Atelectasis
                | LesionType::Opacity
                | LesionType::Consolidation
                | LesionType::Edema
        )
    }
}

/// One abnormal-finding sentence in structured form.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StructuredFinding {
    pub entity: String,
    /// 1-based sentence position in the report.
    pub sentence_index: u32,
    pub presence: Presence,
    pub certainty: Certainty,
    pub reported_locations: BTreeSet<AnatomicalLabel>,
    pub predicted_lesion: Option<LesionType>,
}

/// A record broke a [`StructuredFinding`] invariant.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("field `{field}`: {message}")]
pub struct FindingViolation {
    pub field: &'static str,
    pub message: String,
}

impl StructuredFinding {
    /// The lesion type this finding is about: the predicted type when the
    /// structurer gave one, otherwise the entity itself when it names one of
    /// the seven types.
    pub fn target_lesion(&self) -> Option<LesionType> {
        self.predicted_lesion
            .or_else(|| self.entity.parse::<LesionType>().ok())
    }

    pub fn is_positive(&self) -> bool {
        self.presence == Presence::Positive
    }

    /// Whole-organ findings carry no lung labels.
    pub fn is_whole_heart(&self) -> bool {
        self.target_lesion() == Some(LesionType::Cardiomegaly)
    }

    pub fn validate(&self) -> Result<(), FindingViolation> {
        if self.entity.trim().is_empty() {
            return Err(FindingViolation {
                field: "entity",
                message: "must not be empty".into(),
            });
        }
        if self.sentence_index < 1 {
            return Err(FindingViolation {
                field: "sentence_index",
                message: "must be >= 1".into(),
            });
        }
        if self.is_positive() && self.reported_locations.is_empty() && !self.is_whole_heart() {
            return Err(FindingViolation {
                field: "reported_locations",
                message: "positive finding must map to at least one location".into(),
            });
        }
        Ok(())
    }
}

/// One detector output box; coordinates are inclusive pixel indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "DetectionWire", into = "DetectionWire")]
pub struct DetectionBox {
    pub label: String,
    pub confidence: f64,
    pub x_min: u32,
    pub y_min: u32,
    pub x_max: u32,
    pub y_max: u32,
}

#[derive(Serialize, Deserialize)]
struct DetectionWire {
    label: String,
    confidence: f64,
    bbox: [u32; 4],
}

impl From<DetectionWire> for DetectionBox {
    fn from(w: DetectionWire) -> Self {
        let [x_min, y_min, x_max, y_max] = w.bbox;
        Self {
            label: w.label,
            confidence: w.confidence,
            x_min,
            y_min,
            x_max,
            y_max,
        }
    }
}

impl From<DetectionBox> for DetectionWire {
    fn from(b: DetectionBox) -> Self {
        Self {
            label: b.label,
            confidence: b.confidence,
            bbox: [b.x_min, b.y_min, b.x_max, b.y_max],
        }
    }
}

impl DetectionBox {
    /// Human-readable invariant violations against an image of the given size.
    pub fn violations(&self, width: u32, height: u32) -> Vec<String> {
        let mut out = Vec::new();
        if !(0.0..=1.0).contains(&self.confidence) || self.confidence.is_nan() {
            out.push(format!(
                "confidence {} outside [0, 1] for box `{}`",
                self.confidence, self.label
            ));
        }
        if self.x_min > self.x_max || self.y_min > self.y_max {
            out.push(format!(
                "inverted box [{}, {}, {}, {}]",
                self.x_min, self.y_min, self.x_max, self.y_max
            ));
        }
        if self.x_max >= width || self.y_max >= height {
            out.push(format!(
                "box [{}, {}, {}, {}] outside {width}x{height} image",
                self.x_min, self.y_min, self.x_max, self.y_max
            ));
        }
        out
    }
}

/// A lesion whose mask was verified against its reported locations.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundedLesion {
    pub lesion: LesionType,
    pub certainty: Certainty,
    pub mask: RasterMask,
    pub reported_locations: BTreeSet<AnatomicalLabel>,
    pub grounded_locations: BTreeSet<AnatomicalLabel>,
    pub empty_locations: BTreeSet<AnatomicalLabel>,
    pub source_finding_index: usize,
}

/// One dataset sample.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstructionAnswerPair {
    pub pair_id: String,
    pub study_id: String,
    pub split: Split,
    pub lesion: LesionType,
    pub template_type: TemplateType,
    pub polarity: Polarity,
    pub instruction: String,
    pub answer_text: String,
    pub mask_ref: Option<String>,
    pub locations: BTreeSet<AnatomicalLabel>,
}
