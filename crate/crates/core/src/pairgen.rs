//! Instruction–answer pair generation from grounded lesions, plus negatives
//! for lesions a study does not have.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt::Write as _;

use rand::seq::IteratorRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{NegativesConfig, QcConfig};
use crate::model::{
    AnatomicalLabel, Certainty, GroundedLesion, InstructionAnswerPair, LesionType, Polarity, Split,
    StructuredFinding, TemplateType,
};
use crate::templates::{Filled, Variant};

/// Stable id: the first 16 hex digits of SHA-256 over the identifying fields.
pub fn pair_id(
    study_id: &str,
    lesion: LesionType,
    template_type: TemplateType,
    polarity: Polarity,
    locations: &BTreeSet<AnatomicalLabel>,
) -> String {
    let locs = locations
        .iter()
        .map(|l| l.as_str())
        .collect::<Vec<_>>()
        .join(",");
    let key = format!("{study_id}|{lesion}|{template_type}|{polarity}|{locs}");
    hex::encode(&Sha256::digest(key.as_bytes())[..8])
}

/// Where a positive pair's mask lives, relative to the output directory.
pub fn mask_ref(study_id: &str, lesion: LesionType, finding_index: usize) -> String {
    format!("masks/{study_id}/{}_{finding_index}.png", lesion.as_str())
}

/// Identifies the study a generated pair belongs to.
#[derive(Debug, Clone, Copy)]
pub struct StudyRef<'a> {
    pub study_id: &'a str,
    pub split: Split,
}

fn make_pair(
    s: StudyRef<'_>,
    lesion: LesionType,
    filled: &Filled,
    mask_ref: Option<String>,
) -> InstructionAnswerPair {
    InstructionAnswerPair {
        pair_id: pair_id(
            s.study_id,
            lesion,
            filled.template_type(),
            filled.polarity(),
            &filled.locations,
        ),
        study_id: s.study_id.to_string(),
        split: s.split,
        lesion,
        template_type: filled.template_type(),
        polarity: filled.polarity(),
        instruction: filled.render_instruction(),
        answer_text: filled.render_answer(),
        mask_ref,
        locations: filled.locations.clone(),
    }
}

fn positive_target(g: &GroundedLesion) -> LesionType {
    match g.certainty {
        Certainty::Definitive => g.lesion,
        Certainty::Tentative => LesionType::Opacity,
    }
}

fn positive_mask_ref(s: StudyRef<'_>, g: &GroundedLesion) -> Option<String> {
    Some(mask_ref(s.study_id, g.lesion, g.source_finding_index))
}

/// Location-specific positive. Tentative findings are phrased as opacity;
/// whole-organ lesions get none.
pub fn gen_basic(s: StudyRef<'_>, g: &GroundedLesion) -> Vec<InstructionAnswerPair> {
    if g.lesion == LesionType::Cardiomegaly || g.grounded_locations.is_empty() {
        return Vec::new();
    }
    let f = Filled::basic(positive_target(g), g.grounded_locations.clone(), Polarity::Positive);
    vec![make_pair(s, g.lesion, &f, positive_mask_ref(s, g))]
}

/// Whole-image positive, only when the mask covers every reported location.
pub fn gen_global(s: StudyRef<'_>, g: &GroundedLesion) -> Vec<InstructionAnswerPair> {
    let f = if g.lesion == LesionType::Cardiomegaly {
        Filled {
            variant: Variant::GlobalWholeOrgan,
            target: LesionType::Cardiomegaly,
            locations: BTreeSet::new(),
            lesion: None,
        }
    } else if !g.grounded_locations.is_empty() && g.grounded_locations == g.reported_locations {
        Filled {
            variant: Variant::GlobalPositive,
            target: positive_target(g),
            locations: g.grounded_locations.clone(),
            lesion: None,
        }
    } else {
        return Vec::new();
    };
    vec![make_pair(s, g.lesion, &f, positive_mask_ref(s, g))]
}

/// Opacity-type prediction for pneumonia, atelectasis and edema.
pub fn gen_lesion_inference(s: StudyRef<'_>, g: &GroundedLesion) -> Vec<InstructionAnswerPair> {
    if !g.lesion.is_inference_target() || g.grounded_locations.is_empty() {
        return Vec::new();
    }
    let f = Filled::inference(g.grounded_locations.clone(), Some(g.lesion), g.certainty);
    vec![make_pair(s, g.lesion, &f, positive_mask_ref(s, g))]
}

/// Inputs for negative generation.
#[derive(Debug, Clone)]
pub struct NegativeInputs<'a> {
    pub study: StudyRef<'a>,
    pub findings: &'a [StructuredFinding],
    pub grounded: &'a [GroundedLesion],
    pub empty_locations: &'a BTreeSet<AnatomicalLabel>,
    pub ctr: Option<f64>,
}

fn study_rng(seed: u64, study_id: &str) -> ChaCha8Rng {
    let digest = Sha256::digest(format!("{seed}|{study_id}").as_bytes());
    let mut bytes = [0u8; 32];
    bytes.copy_from_slice(&digest);
    ChaCha8Rng::from_seed(bytes)
}

/// At most one negative per lesion type.
///
/// Lesions reported positive are re-targeted to a random empty location
/// when one exists. Lesions that are absent or negated use a random empty
/// location when available, otherwise a random lung region (basic) or the
/// global template. Opacity counts as present whenever any opacity-family
/// lesion is positive. Cardiomegaly negatives need a CTR at or below
/// `qc.ctr_max`.
pub fn gen_negatives(
    input: &NegativeInputs<'_>,
    neg: &NegativesConfig,
    qc: &QcConfig,
) -> Vec<InstructionAnswerPair> {
    let s = input.study;
    let mut rng = study_rng(neg.seed, s.study_id);
    let positive: BTreeSet<LesionType> = input
        .findings
        .iter()
        .filter(|f| f.is_positive())
        .filter_map(StructuredFinding::target_lesion)
        .collect();
    let any_opacity_family = positive.iter().any(|l| l.is_opacity_family());

    let mut out = Vec::new();
    for &lesion in LesionType::ALL {
        if lesion == LesionType::Cardiomegaly {
            if !positive.contains(&lesion) && input.ctr.is_some_and(|c| c <= qc.ctr_max) {
                let f = Filled {
                    variant: Variant::GlobalNegative,
                    target: lesion,
                    locations: BTreeSet::new(),
                    lesion: None,
                };
                out.push(make_pair(s, lesion, &f, None));
            }
            continue;
        }

        let present = positive.contains(&lesion)
            || (lesion == LesionType::Opacity && any_opacity_family);
        let empty_pick = input.empty_locations.iter().copied().choose(&mut rng);

        let filled = if present {
            match empty_pick {
                Some(l) => Filled::basic(lesion, [l].into(), Polarity::Negative),
                None => continue,
            }
        } else if let Some(l) = empty_pick {
            Filled::basic(lesion, [l].into(), Polarity::Negative)
        } else if rng.random_bool(neg.global_probability) {
            Filled {
                variant: Variant::GlobalNegative,
                target: lesion,
                locations: BTreeSet::new(),
                lesion: None,
            }
        } else {
            let l = *AnatomicalLabel::ALL.iter().choose(&mut rng).expect("ten labels");
            Filled::basic(lesion, [l].into(), Polarity::Negative)
        };

        let filled = if lesion == LesionType::Opacity
            && filled.variant == Variant::BasicNegative
            && rng.random_bool(neg.inference_probability)
        {
            Filled::inference(filled.locations, None, Certainty::Definitive)
        } else {
            filled
        };
        out.push(make_pair(s, lesion, &filled, None));
    }
    out
}

/// Every pair for one study, positives first, duplicates (same id) dropped.
pub fn generate_study_pairs(
    input: &NegativeInputs<'_>,
    neg: &NegativesConfig,
    qc: &QcConfig,
) -> Vec<InstructionAnswerPair> {
    let s = input.study;
    let mut out = Vec::new();
    for g in input.grounded {
        out.extend(gen_basic(s, g));
        out.extend(gen_global(s, g));
        out.extend(gen_lesion_inference(s, g));
    }
    out.extend(gen_negatives(input, neg, qc));
    let mut seen = HashSet::new();
    out.retain(|p| seen.insert(p.pair_id.clone()));
    out
}

/// Pair counts per lesion, template type and polarity for one split.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitStats {
    /// `counts[lesion][template_type][polarity]`.
    pub counts: BTreeMap<LesionType, BTreeMap<TemplateType, BTreeMap<Polarity, u64>>>,
    pub images: u64,
    pub pairs: u64,
}

impl SplitStats {
    pub fn get(&self, l: LesionType, t: TemplateType, p: Polarity) -> u64 {
        self.counts
            .get(&l)
            .and_then(|m| m.get(&t))
            .and_then(|m| m.get(&p))
            .copied()
            .unwrap_or(0)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub splits: BTreeMap<Split, SplitStats>,
}

impl DatasetStats {
    /// Counts `pairs`; `images` is the number of studies per split that
    /// contributed at least one pair.
    pub fn from_pairs(pairs: &[InstructionAnswerPair]) -> Self {
        let mut stats = DatasetStats::default();
        for &split in Split::ALL {
            let mut s = SplitStats::default();
            for &l in LesionType::ALL {
                let per_t = s.counts.entry(l).or_default();
                for &t in TemplateType::ALL {
                    let per_p = per_t.entry(t).or_default();
                    for &p in Polarity::ALL {
                        per_p.insert(p, 0);
                    }
                }
            }
            stats.splits.insert(split, s);
        }
        let mut images: BTreeMap<Split, BTreeSet<&str>> = BTreeMap::new();
        for p in pairs {
            let s = stats.splits.get_mut(&p.split).expect("all splits present");
            *s.counts
                .get_mut(&p.lesion)
                .and_then(|m| m.get_mut(&p.template_type))
                .and_then(|m| m.get_mut(&p.polarity))
                .expect("all cells present") += 1;
            s.pairs += 1;
            images.entry(p.split).or_default().insert(&p.study_id);
        }
        for (split, ids) in images {
            stats.splits.get_mut(&split).expect("present").images = ids.len() as u64;
        }
        stats
    }

    /// Plain-text tables, one per split.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        for (split, s) in &self.splits {
            let _ = writeln!(out, "[{split}] images: {}  pairs: {}", s.images, s.pairs);
            let _ = writeln!(
                out,
                "{:<14}{:>8}{:>8}{:>8}{:>8}{:>8}{:>8}",
                "lesion", "basic+", "basic-", "global+", "global-", "infer+", "infer-"
            );
            for &l in LesionType::ALL {
                let _ = write!(out, "{:<14}", l.as_str());
                for &t in TemplateType::ALL {
                    for &p in Polarity::ALL {
                        let _ = write!(out, "{:>8}", s.get(l, t, p));
                    }
                }
                out.push('\n');
            }
            out.push('\n');
        }
        out
    }
}
