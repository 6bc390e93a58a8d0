//! Scoring of model predictions: gIoU, cIoU and empty-target accuracy for
//! masks, and strict template-and-variable accuracy for text answers.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::io::{self, FormatError};
use crate::mask::{RasterError, RasterMask};
use crate::model::{InstructionAnswerPair, LesionType, Polarity, TemplateType};
use crate::templates::parse_answer;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error("prediction for unknown pair `{0}`")]
    UnknownPair(String),
    #[error("more than one prediction for pair `{0}`")]
    DuplicatePrediction(String),
    #[error("positive pair `{0}` has no ground-truth mask")]
    MissingTruthMask(String),
    #[error("pair `{pair_id}`: {source}")]
    Raster {
        pair_id: String,
        #[source]
        source: RasterError,
    },
}

/// A model output for one pair.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub pair_id: String,
    pub mask: Option<RasterMask>,
    pub answer_text: String,
}

#[derive(Deserialize)]
struct PredictionLine {
    pair_id: String,
    mask_path: Option<PathBuf>,
    #[serde(default)]
    answer_text: String,
}

/// Reads a predictions JSON Lines file. Relative mask paths resolve against
/// the file's directory.
pub fn load_predictions(path: &Path) -> Result<Vec<Prediction>, FormatError> {
    let root = path.parent().unwrap_or(Path::new("."));
    let lines: Vec<PredictionLine> = io::read_jsonl(path)?;
    lines
        .into_iter()
        .map(|l| {
            let mask = match l.mask_path {
                Some(p) => Some(io::read_mask(&root.join(p))?),
                None => None,
            };
            Ok(Prediction {
                pair_id: l.pair_id,
                mask,
                answer_text: l.answer_text,
            })
        })
        .collect()
}

/// A dataset pair with its mask loaded (positives only).
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub pair: InstructionAnswerPair,
    pub mask: Option<RasterMask>,
}

/// Reads a pairs file and the masks it references, relative to `root`.
pub fn load_ground_truth(pairs_path: &Path, root: &Path) -> Result<Vec<GroundTruth>, FormatError> {
    let pairs: Vec<InstructionAnswerPair> = io::read_jsonl(pairs_path)?;
    pairs
        .into_iter()
        .map(|pair| {
            let mask = match &pair.mask_ref {
                Some(r) => Some(io::read_mask(&root.join(r))?),
                None => None,
            };
            Ok(GroundTruth { pair, mask })
        })
        .collect()
}

/// Running sums for the mask metrics. Merging is associative, so shards can
/// be scored independently and combined.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SegAccumulator {
    pub positives: u64,
    pub iou_sum: f64,
    pub intersection: u64,
    pub union: u64,
    pub negatives: u64,
    pub negatives_empty: u64,
}

impl SegAccumulator {
    pub fn add_positive(&mut self, intersection: usize, union: usize) {
        self.positives += 1;
        self.intersection += intersection as u64;
        self.union += union as u64;
        if union > 0 {
            self.iou_sum += intersection as f64 / union as f64;
        }
    }

    pub fn add_negative(&mut self, predicted_empty: bool) {
        self.negatives += 1;
        if predicted_empty {
            self.negatives_empty += 1;
        }
    }

    pub fn merge(&mut self, other: &SegAccumulator) {
        self.positives += other.positives;
        self.iou_sum += other.iou_sum;
        self.intersection += other.intersection;
        self.union += other.union;
        self.negatives += other.negatives;
        self.negatives_empty += other.negatives_empty;
    }

    pub fn metrics(&self) -> SegMetrics {
        SegMetrics {
            giou: (self.positives > 0).then(|| self.iou_sum / self.positives as f64),
            ciou: (self.positives > 0).then(|| {
                if self.union == 0 {
                    0.0
                } else {
                    self.intersection as f64 / self.union as f64
                }
            }),
            n_acc: (self.negatives > 0).then(|| self.negatives_empty as f64 / self.negatives as f64),
            positives: self.positives,
            negatives: self.negatives,
        }
    }
}

/// Metrics in `[0, 1]`; `None` when there were no samples of that kind.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegMetrics {
    pub giou: Option<f64>,
    pub ciou: Option<f64>,
    pub n_acc: Option<f64>,
    pub positives: u64,
    pub negatives: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegReport {
    pub overall: SegMetrics,
    pub per_lesion: BTreeMap<LesionType, SegMetrics>,
}

fn index_predictions<'p>(
    preds: &'p [Prediction],
    truth: &[GroundTruth],
) -> Result<HashMap<&'p str, &'p Prediction>, EvalError> {
    let known: HashMap<&str, ()> = truth.iter().map(|t| (t.pair.pair_id.as_str(), ())).collect();
    let mut by_id = HashMap::new();
    for p in preds {
        if !known.contains_key(p.pair_id.as_str()) {
            return Err(EvalError::UnknownPair(p.pair_id.clone()));
        }
        if by_id.insert(p.pair_id.as_str(), p).is_some() {
            return Err(EvalError::DuplicatePrediction(p.pair_id.clone()));
        }
    }
    Ok(by_id)
}

/// Scores predicted masks. Positives without a prediction count as IoU 0;
/// negatives without one count as wrong.
pub fn score_segmentation(
    preds: &[Prediction],
    truth: &[GroundTruth],
) -> Result<SegReport, EvalError> {
    let by_id = index_predictions(preds, truth)?;
    let mut overall = SegAccumulator::default();
    let mut per: BTreeMap<LesionType, SegAccumulator> = BTreeMap::new();
    for t in truth {
        let id = &t.pair.pair_id;
        let pred = by_id.get(id.as_str()).and_then(|p| p.mask.as_ref());
        let mut acc = SegAccumulator::default();
        match t.pair.polarity {
            Polarity::Positive => {
                let gt = t
                    .mask
                    .as_ref()
                    .ok_or_else(|| EvalError::MissingTruthMask(id.clone()))?;
                let raster = |source| EvalError::Raster {
                    pair_id: id.clone(),
                    source,
                };
                let (i, u) = match pred {
                    Some(p) => (
                        p.intersection_count(gt).map_err(raster)?,
                        p.union_count(gt).map_err(raster)?,
                    ),
                    None => (0, gt.len()),
                };
                acc.add_positive(i, u);
            }
            Polarity::Negative => {
                let answered = by_id.contains_key(id.as_str());
                acc.add_negative(answered && pred.is_none_or(RasterMask::is_empty));
            }
        }
        overall.merge(&acc);
        per.entry(t.pair.lesion).or_default().merge(&acc);
    }
    Ok(SegReport {
        overall: overall.metrics(),
        per_lesion: per.into_iter().map(|(l, a)| (l, a.metrics())).collect(),
    })
}

/// `(correct, total)` with an accuracy view.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tally {
    pub correct: u64,
    pub total: u64,
}

impl Tally {
    fn add(&mut self, ok: bool) {
        self.total += 1;
        if ok {
            self.correct += 1;
        }
    }

    pub fn accuracy(&self) -> Option<f64> {
        (self.total > 0).then(|| self.correct as f64 / self.total as f64)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TextReport {
    pub overall: Tally,
    pub per_template: BTreeMap<TemplateType, Tally>,
    pub per_polarity: BTreeMap<Polarity, Tally>,
    pub per_lesion: BTreeMap<LesionType, Tally>,
}

/// True when `response` parses to the same template variant with the same
/// variables as `truth`, under `truth`'s template type.
pub fn answer_matches(response: &str, truth: &str, template_type: TemplateType) -> bool {
    match (parse_answer(truth, template_type), parse_answer(response, template_type)) {
        (Some(t), Some(r)) => t == r,
        _ => false,
    }
}

/// Strict text accuracy. Missing or unparseable responses are wrong.
pub fn score_text(preds: &[Prediction], truth: &[GroundTruth]) -> Result<TextReport, EvalError> {
    let by_id = index_predictions(preds, truth)?;
    let mut r = TextReport::default();
    for t in truth {
        let ok = by_id
            .get(t.pair.pair_id.as_str())
            .is_some_and(|p| answer_matches(&p.answer_text, &t.pair.answer_text, t.pair.template_type));
        r.overall.add(ok);
        r.per_template.entry(t.pair.template_type).or_default().add(ok);
        r.per_polarity.entry(t.pair.polarity).or_default().add(ok);
        r.per_lesion.entry(t.pair.lesion).or_default().add(ok);
    }
    Ok(r)
}

fn pct(v: Option<f64>) -> String {
    v.map(|x| format!("{:.1}", x * 100.0))
        .unwrap_or_else(|| "-".into())
}

/// Both reports as fixed-width text tables, percentages to one decimal.
pub fn render_text(seg: &SegReport, text: &TextReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{:<14}{:>8}{:>8}{:>8}{:>6}{:>6}", "lesion", "gIoU", "cIoU", "N-Acc", "pos", "neg");
    let mut row = |name: &str, m: &SegMetrics| {
        let _ = writeln!(
            out,
            "{:<14}{:>8}{:>8}{:>8}{:>6}{:>6}",
            name,
            pct(m.giou),
            pct(m.ciou),
            pct(m.n_acc),
            m.positives,
            m.negatives
        );
    };
    for (l, m) in &seg.per_lesion {
        row(l.as_str(), m);
    }
    row("overall", &seg.overall);
    out.push('\n');
    let _ = writeln!(out, "{:<18}{:>8}{:>8}", "text accuracy", "acc", "n");
    let mut trow = |name: &str, t: &Tally| {
        let _ = writeln!(out, "{:<18}{:>8}{:>8}", name, pct(t.accuracy()), t.total);
    };
    for (k, t) in &text.per_template {
        trow(k.as_str(), t);
    }
    for (k, t) in &text.per_polarity {
        trow(k.as_str(), t);
    }
    for (k, t) in &text.per_lesion {
        trow(k.as_str(), t);
    }
    trow("overall", &text.overall);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    fn pair(id: &str, polarity: Polarity, tt: TemplateType, answer: &str) -> InstructionAnswerPair {
        InstructionAnswerPair {
            pair_id: id.into(),
            study_id: "s".into(),
            split: crate::model::Split::Test,
            lesion: LesionType::Pneumonia,
            template_type: tt,
            polarity,
            instruction: String::new(),
            answer_text: answer.into(),
            mask_ref: None,
            locations: BTreeSet::new(),
        }
    }

    fn row_mask(w: u32, cols: &[u32]) -> RasterMask {
        RasterMask::from_coords(w, 1, cols.iter().map(|&c| (0, c))).unwrap()
    }

    #[test]
    fn worked_example() {
        let truth = vec![
            GroundTruth { pair: pair("a", Polarity::Positive, TemplateType::Basic, "[SEG]"), mask: Some(row_mask(8, &[0, 1, 2])) },
            GroundTruth { pair: pair("b", Polarity::Positive, TemplateType::Basic, "[SEG]"), mask: Some(row_mask(8, &[4, 5, 6])) },
        ];
        // a: pred {1,2,3} → ∩2 ∪4; b: exact → ∩3 ∪3
        let preds = vec![
            Prediction { pair_id: "a".into(), mask: Some(row_mask(8, &[1, 2, 3])), answer_text: "[SEG]".into() },
            Prediction { pair_id: "b".into(), mask: Some(row_mask(8, &[4, 5, 6])), answer_text: "[SEG]".into() },
        ];
        let r = score_segmentation(&preds, &truth).unwrap();
        assert!((r.overall.giou.unwrap() - 0.75).abs() < 1e-12);
        assert!((r.overall.ciou.unwrap() - 5.0 / 7.0).abs() < 1e-12);
        assert_eq!(r.overall.n_acc, None);
    }

    #[test]
    fn n_acc_and_missing() {
        let mut truth = Vec::new();
        let mut preds = Vec::new();
        for i in 0..10 {
            let id = format!("n{i}");
            truth.push(GroundTruth { pair: pair(&id, Polarity::Negative, TemplateType::Global, "[SEG] There is no pneumonia."), mask: None });
            let mask = if i == 0 { Some(row_mask(4, &[1])) } else if i == 1 { Some(row_mask(4, &[])) } else { None };
            preds.push(Prediction { pair_id: id, mask, answer_text: String::new() });
        }
        let r = score_segmentation(&preds, &truth).unwrap();
        assert!((r.overall.n_acc.unwrap() - 0.9).abs() < 1e-12);
        preds.pop();
        let r = score_segmentation(&preds, &truth).unwrap();
        assert!((r.overall.n_acc.unwrap() - 0.8).abs() < 1e-12);

        let bad = vec![Prediction { pair_id: "zzz".into(), mask: None, answer_text: String::new() }];
        assert!(matches!(score_segmentation(&bad, &truth), Err(EvalError::UnknownPair(_))));
    }

    #[test]
    fn text_strictness() {
        let truth = vec![
            GroundTruth { pair: pair("a", Polarity::Negative, TemplateType::Basic, "[SEG] There is no pneumonia in the left lung."), mask: None },
            GroundTruth { pair: pair("b", Polarity::Positive, TemplateType::LesionInference, "[SEG] It is highly suggestive of edema."), mask: Some(row_mask(2, &[0])) },
        ];
        let wrong = vec![
            Prediction { pair_id: "a".into(), mask: None, answer_text: "[SEG] There is no pneumonia in the right lung.".into() },
            Prediction { pair_id: "b".into(), mask: None, answer_text: "[SEG] It possibly reflects edema.".into() },
        ];
        assert_eq!(score_text(&wrong, &truth).unwrap().overall, Tally { correct: 0, total: 2 });
        let right: Vec<_> = truth
            .iter()
            .map(|t| Prediction { pair_id: t.pair.pair_id.clone(), mask: t.mask.clone(), answer_text: t.pair.answer_text.clone() })
            .collect();
        let r = score_text(&right, &truth).unwrap();
        assert_eq!(r.overall.accuracy(), Some(1.0));
        assert!(r.per_template.values().all(|t| t.accuracy() == Some(1.0)));
        let s = score_segmentation(&right, &truth).unwrap();
        assert_eq!((s.overall.giou, s.overall.ciou, s.overall.n_acc), (Some(1.0), Some(1.0), Some(1.0)));
        assert!(render_text(&s, &r).contains("100.0"));
    }
}
