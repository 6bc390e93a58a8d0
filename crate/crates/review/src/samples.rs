//! Review samples drawn from a generated dataset.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use ils_core::io;
use ils_core::model::{AnatomicalLabel, InstructionAnswerPair, LesionType, Polarity, Split, TemplateType};
use ils_core::study::Manifest;
use serde::{Deserialize, Serialize};

use crate::ReviewError;

/// One pair as shown to an expert. `sample_id` is the pair id.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sample {
    pub sample_id: String,
    pub study_id: String,
    pub lesion: LesionType,
    pub template_type: TemplateType,
    pub polarity: Polarity,
    pub locations: BTreeSet<AnatomicalLabel>,
    pub instruction: String,
    pub answer_text: String,
    pub report_text: String,
    #[serde(skip)]
    pub image_path: PathBuf,
    #[serde(skip)]
    pub mask_path: Option<PathBuf>,
}

/// Samples for every pair in `dataset/pairs.jsonl` belonging to `split`,
/// with images and reports resolved through the manifest.
pub fn load_samples(dataset: &Path, manifest: &Manifest, split: Split) -> Result<Vec<Sample>, ReviewError> {
    let pairs: Vec<InstructionAnswerPair> = io::read_jsonl(&dataset.join("pairs.jsonl"))?;
    let studies: BTreeMap<&str, _> = manifest.studies.iter().map(|s| (s.study_id.as_str(), s)).collect();
    let mut reports: BTreeMap<&str, String> = BTreeMap::new();
    let mut out = Vec::new();
    for p in pairs.into_iter().filter(|p| p.split == split) {
        let study = studies
            .get(p.study_id.as_str())
            .ok_or_else(|| ReviewError::UnknownStudy(p.study_id.clone()))?;
        if !reports.contains_key(study.study_id.as_str()) {
            let path = manifest.root.join(&study.report);
            let text = std::fs::read_to_string(&path).map_err(|e| io::FormatError::io(&path, e))?;
            reports.insert(&study.study_id, text.trim().to_string());
        }
        out.push(Sample {
            sample_id: p.pair_id,
            study_id: p.study_id,
            lesion: p.lesion,
            template_type: p.template_type,
            polarity: p.polarity,
            locations: p.locations,
            instruction: p.instruction,
            answer_text: p.answer_text,
            report_text: reports[study.study_id.as_str()].clone(),
            image_path: manifest.root.join(&study.image),
            mask_path: p.mask_ref.map(|m| dataset.join(m)),
        });
    }
    Ok(out)
}
