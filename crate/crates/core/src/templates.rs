//! The instruction and answer templates, with rendering and strict parsing.
//!
//! | type | instruction | positive answer | negative answer |
//! |------|-------------|-----------------|-----------------|
//! | basic | `Segment the {target} in the {location}.` | `[SEG]` | `[SEG] There is no {target} in the {location}.` |
//! | global | `Segment the {target}.` | `[SEG] It is located in the {location}.` | `[SEG] There is no {target}.` |
//! | lesion inference | `Segment the opacity in the {location} and predict its type.` | `[SEG] It is highly suggestive of {lesion}.` / `[SEG] It possibly reflects {lesion}.` | `[SEG] There is no opacity in the {location}.` |
//!
//! Whole-organ findings (cardiomegaly) answer a global instruction with a
//! bare `[SEG]`.

use std::collections::BTreeSet;

use crate::model::{AnatomicalLabel, Certainty, LesionType, Polarity, TemplateType};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Variant {
    BasicPositive,
    BasicNegative,
    GlobalPositive,
    GlobalWholeOrgan,
    GlobalNegative,
    InferenceDefinitive,
    InferenceTentative,
    InferenceNegative,
}

impl Variant {
    pub const ALL: [Variant; 8] = [
        Variant::BasicPositive,
        Variant::BasicNegative,
        Variant::GlobalPositive,
        Variant::GlobalWholeOrgan,
        Variant::GlobalNegative,
        Variant::InferenceDefinitive,
        Variant::InferenceTentative,
        Variant::InferenceNegative,
    ];

    pub fn template_type(self) -> TemplateType {
        use Variant::*;
        match self {
            BasicPositive | BasicNegative => TemplateType::Basic,
            GlobalPositive | GlobalWholeOrgan | GlobalNegative => TemplateType::Global,
            _ => TemplateType::LesionInference,
        }
    }

    pub fn polarity(self) -> Polarity {
        use Variant::*;
        match self {
            BasicNegative | GlobalNegative | InferenceNegative => Polarity::Negative,
            _ => Polarity::Positive,
        }
    }

    pub fn instruction_template(self) -> &'static str {
        match self.template_type() {
            TemplateType::Basic => "Segment the {target} in the {location}.",
            TemplateType::Global => "Segment the {target}.",
            TemplateType::LesionInference => {
                "Segment the opacity in the {location} and predict its type."
            }
        }
    }

    pub fn answer_template(self) -> &'static str {
        use Variant::*;
        match self {
            BasicPositive | GlobalWholeOrgan => "[SEG]",
            BasicNegative => "[SEG] There is no {target} in the {location}.",
            GlobalPositive => "[SEG] It is located in the {location}.",
            GlobalNegative => "[SEG] There is no {target}.",
            InferenceDefinitive => "[SEG] It is highly suggestive of {lesion}.",
            InferenceTentative => "[SEG] It possibly reflects {lesion}.",
            InferenceNegative => "[SEG] There is no opacity in the {location}.",
        }
    }
}

/// A template with its variables filled in.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Filled {
    pub variant: Variant,
    /// Lesion named in the instruction; always opacity for lesion inference.
    pub target: LesionType,
    /// Instruction locations for basic and lesion inference, answer
    /// locations for global positives, empty otherwise.
    pub locations: BTreeSet<AnatomicalLabel>,
    /// Lesion named in a lesion-inference positive answer.
    pub lesion: Option<LesionType>,
}

/// Variables that appear in an answer string.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnswerVars {
    pub variant: Variant,
    pub target: Option<LesionType>,
    pub locations: Option<BTreeSet<AnatomicalLabel>>,
    pub lesion: Option<LesionType>,
}

/// Labels in declaration order joined with " and ".
pub fn join_locations(locations: &BTreeSet<AnatomicalLabel>) -> String {
    locations
        .iter()
        .map(|l| l.as_str())
        .collect::<Vec<_>>()
        .join(" and ")
}

/// Inverse of [`join_locations`]; accepts any order, rejects duplicates and
/// unknown names.
pub fn parse_locations(text: &str) -> Option<BTreeSet<AnatomicalLabel>> {
    let mut out = BTreeSet::new();
    for part in text.split(" and ") {
        let label = AnatomicalLabel::ALL.iter().find(|l| l.as_str() == part)?;
        if !out.insert(*label) {
            return None;
        }
    }
    Some(out)
}

fn parse_lesion(text: &str) -> Option<LesionType> {
    LesionType::ALL.iter().copied().find(|l| l.as_str() == text)
}

/// Matches `text` against a template with `{name}` placeholders. Each
/// placeholder captures up to the first occurrence of the following literal.
fn match_template<'t>(template: &str, text: &'t str) -> Option<Vec<(String, &'t str)>> {
    let mut caps = Vec::new();
    let mut rest_t = template;
    let mut rest = text;
    loop {
        match rest_t.find('{') {
            None => return (rest == rest_t).then_some(caps),
            Some(open) => {
                let literal = &rest_t[..open];
                rest = rest.strip_prefix(literal)?;
                let close = rest_t[open..].find('}')? + open;
                let name = rest_t[open + 1..close].to_string();
                rest_t = &rest_t[close + 1..];
                let next_literal = match rest_t.find('{') {
                    Some(i) => &rest_t[..i],
                    None => rest_t,
                };
                let end = if rest_t.contains('{') {
                    rest.find(next_literal)?
                } else {
                    rest.len().checked_sub(next_literal.len())?
                };
                let value = &rest[..end];
                if value.is_empty() {
                    return None;
                }
                caps.push((name, value));
                rest = &rest[end..];
            }
        }
    }
}

#[derive(Default)]
struct Vars {
    target: Option<LesionType>,
    locations: Option<BTreeSet<AnatomicalLabel>>,
    lesion: Option<LesionType>,
}

fn parse_with(template: &str, text: &str) -> Option<Vars> {
    let mut v = Vars::default();
    for (name, value) in match_template(template, text.trim())? {
        match name.as_str() {
            "target" => v.target = Some(parse_lesion(value)?),
            "location" => v.locations = Some(parse_locations(value)?),
            "lesion" => v.lesion = Some(parse_lesion(value)?),
            _ => return None,
        }
    }
    Some(v)
}

fn fill(template: &str, target: LesionType, locations: &BTreeSet<AnatomicalLabel>, lesion: Option<LesionType>) -> String {
    template
        .replace("{target}", target.as_str())
        .replace("{location}", &join_locations(locations))
        .replace("{lesion}", lesion.map(LesionType::as_str).unwrap_or(""))
}

impl Filled {
    pub fn template_type(&self) -> TemplateType {
        self.variant.template_type()
    }

    pub fn polarity(&self) -> Polarity {
        self.variant.polarity()
    }

    pub fn render_instruction(&self) -> String {
        fill(self.variant.instruction_template(), self.target, &self.locations, self.lesion)
    }

    pub fn render_answer(&self) -> String {
        fill(self.variant.answer_template(), self.target, &self.locations, self.lesion)
    }

    pub fn basic(target: LesionType, locations: BTreeSet<AnatomicalLabel>, polarity: Polarity) -> Self {
        let variant = match polarity {
            Polarity::Positive => Variant::BasicPositive,
            Polarity::Negative => Variant::BasicNegative,
        };
        Self {
            variant,
            target,
            locations,
            lesion: None,
        }
    }

    pub fn inference(locations: BTreeSet<AnatomicalLabel>, lesion: Option<LesionType>, certainty: Certainty) -> Self {
        let variant = match (lesion, certainty) {
            (None, _) => Variant::InferenceNegative,
            (Some(_), Certainty::Definitive) => Variant::InferenceDefinitive,
            (Some(_), Certainty::Tentative) => Variant::InferenceTentative,
        };
        Self {
            variant,
            target: LesionType::Opacity,
            locations,
            lesion,
        }
    }
}

/// Recovers the filled template from an instruction and answer. Returns
/// `None` unless exactly one template matches with consistent variables.
pub fn parse_pair(instruction: &str, answer: &str) -> Option<Filled> {
    let mut found = None;
    for variant in Variant::ALL {
        let Some(iv) = parse_with(variant.instruction_template(), instruction) else {
            continue;
        };
        let Some(av) = parse_with(variant.answer_template(), answer) else {
            continue;
        };
        let target = match variant.template_type() {
            TemplateType::LesionInference => LesionType::Opacity,
            _ => iv.target?,
        };
        if av.target.is_some_and(|t| t != target) {
            continue;
        }
        let locations = match (iv.locations, av.locations) {
            (Some(i), Some(a)) if i != a => continue,
            (Some(i), _) => i,
            (None, Some(a)) => a,
            (None, None) => BTreeSet::new(),
        };
        let filled = Filled {
            variant,
            target,
            locations,
            lesion: av.lesion,
        };
        if found.replace(filled).is_some() {
            return None;
        }
    }
    found
}

/// Parses an answer in the context of its template type.
pub fn parse_answer(answer: &str, template_type: TemplateType) -> Option<AnswerVars> {
    let mut found = None;
    for variant in Variant::ALL {
        if variant.template_type() != template_type {
            continue;
        }
        if let Some(v) = parse_with(variant.answer_template(), answer) {
            let vars = AnswerVars {
                variant,
                target: v.target,
                locations: v.locations,
                lesion: v.lesion,
            };
            if found.replace(vars).is_some() {
                return None;
            }
        }
    }
    found
}
