//! Synthetic studies with known ground truth.
//!
//! A phantom has two rectangular lungs split into four equal bands, a heart
//! rectangle, and a smooth vertical background gradient. Lesions are flat
//! intensity plateaus added on top; the "edited" image is the background
//! alone, so the difference image recovers the lesions exactly. Detector
//! boxes are the lesion bounding boxes with optional jitter and confidence
//! noise, and the report is written in the constrained grammar understood by
//! [`crate::report::structure_report`].

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::io::{self, FormatError};
use crate::mask::{ImageGray, RasterMask};
use crate::model::{
    AnatomicalLabel, Certainty, DetectionBox, LesionType, Side, Split, TemplateType, Zone,
};
use crate::qc::compute_ctr;
use crate::raster::{morph, MorphOp};
use crate::study::{Manifest, OrganMaskPaths, ProviderArtifacts, Study};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error("placement {index}: {message}")]
    Placement { index: usize, message: String },
    #[error("placements {a} ({la}) and {b} ({lb}) touch; their lesions would merge")]
    Overlap {
        a: usize,
        la: LesionType,
        b: usize,
        lb: LesionType,
    },
    #[error("image must be at least 32x32, got {0}x{1}")]
    TooSmall(u32, u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    /// Ellipse inscribed in each contiguous run of zones.
    Ellipse,
    /// Rectangle inset in each contiguous run of zones.
    Rect,
    /// Full-width band over the lowest rows of the lung.
    BasalBand,
}

/// One injected lesion. `delta` is the plateau height as a fraction of the
/// maximum intensity. Cardiomegaly takes no zones and enlarges the heart.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Placement {
    pub lesion: LesionType,
    pub zones: BTreeSet<AnatomicalLabel>,
    pub certainty: Certainty,
    pub shape: Shape,
    pub delta: f64,
    pub confidence: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorNoise {
    /// Each box edge moves by up to this many pixels.
    pub jitter_px: u32,
    /// Confidence moves uniformly within ± this amount.
    pub confidence_noise: f64,
    /// Extra low-confidence boxes at random positions.
    pub decoys: u32,
}

impl DetectorNoise {
    pub const NONE: DetectorNoise = DetectorNoise {
        jitter_px: 0,
        confidence_noise: 0.0,
        decoys: 0,
    };
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudySpec {
    pub study_id: String,
    pub width: u32,
    pub height: u32,
    pub split: Split,
    pub placements: Vec<Placement>,
    /// Lesions stated as absent ("No pneumonia.").
    pub negated: Vec<LesionType>,
    pub noise: DetectorNoise,
    /// Isolated bright pixels added away from lesions.
    pub speckles: u32,
    pub qc_flags: Vec<String>,
    pub seed: u64,
}

/// What the pipeline is expected to recover for one lesion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthLesion {
    pub lesion: LesionType,
    pub certainty: Certainty,
    pub locations: BTreeSet<AnatomicalLabel>,
    pub mask_path: PathBuf,
    pub sentence_index: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpectedPair {
    pub lesion: LesionType,
    pub template_type: TemplateType,
    pub locations: BTreeSet<AnatomicalLabel>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleTruth {
    pub study_id: String,
    pub lesions: Vec<TruthLesion>,
    pub ctr: f64,
    pub report: String,
    pub expected_positive_pairs: Vec<ExpectedPair>,
    /// Lesion types that may receive a negative pair.
    pub negative_eligible: Vec<LesionType>,
}

/// Phantom geometry derived from the image size.
#[derive(Debug, Clone)]
pub struct Phantom {
    pub width: u32,
    pub height: u32,
    pub right_lung: RasterMask,
    pub left_lung: RasterMask,
    pub heart: RasterMask,
    pub anatomy: BTreeMap<AnatomicalLabel, RasterMask>,
    rows: (u32, u32),
    cols: BTreeMap<Side, (u32, u32)>,
}

fn frac(n: u32, f: f64) -> u32 {
    (n as f64 * f).floor() as u32
}

impl Phantom {
    pub fn new(width: u32, height: u32, enlarged_heart: bool) -> Self {
        let rows = (frac(height, 0.15), frac(height, 0.85) - 1);
        let mut cols = BTreeMap::new();
        cols.insert(Side::Right, (frac(width, 0.10), frac(width, 0.45) - 1));
        cols.insert(Side::Left, (frac(width, 0.55), frac(width, 0.90) - 1));
        let lung = |side| RasterMask::rect(width, height, rows, cols[&side]);
        let right_lung = lung(Side::Right);
        let left_lung = lung(Side::Left);

        let thoracic = cols[&Side::Left].1 - cols[&Side::Right].0 + 1;
        let ratio = if enlarged_heart { 0.55 } else { 0.38 };
        let hw = (thoracic as f64 * ratio).round() as u32;
        let h0 = width / 2 - hw / 2;
        let heart = RasterMask::rect(width, height, (frac(height, 0.45), frac(height, 0.80) - 1), (h0, h0 + hw - 1));

        let mut anatomy = BTreeMap::new();
        for &label in AnatomicalLabel::ALL {
            let (c0, c1) = cols[&label.side()];
            let (r0, r1) = match label.zone() {
                None => rows,
                Some(z) => band_rows(rows, z),
            };
            anatomy.insert(label, RasterMask::rect(width, height, (r0, r1), (c0, c1)));
        }
        Self {
            width,
            height,
            right_lung,
            left_lung,
            heart,
            anatomy,
            rows,
            cols,
        }
    }

    pub fn lung(&self, side: Side) -> &RasterMask {
        match side {
            Side::Right => &self.right_lung,
            Side::Left => &self.left_lung,
        }
    }

    pub fn background(&self, row: u32) -> f64 {
        60.0 + 24.0 * row as f64 / self.height as f64
    }
}

fn band_rows(rows: (u32, u32), zone: Zone) -> (u32, u32) {
    let n = rows.1 - rows.0 + 1;
    let k = zone.band();
    (rows.0 + k * n / 4, rows.0 + (k + 1) * n / 4 - 1)
}

/// Zone bands covered by a set of labels on one side, as sorted band indices.
fn bands_for(zones: &BTreeSet<AnatomicalLabel>, side: Side) -> BTreeSet<u32> {
    let mut out = BTreeSet::new();
    for l in zones.iter().filter(|l| l.side() == side) {
        match l.zone() {
            None => out.extend(0..4),
            Some(z) => {
                out.insert(z.band());
            }
        }
    }
    out
}

fn runs(bands: &BTreeSet<u32>) -> Vec<(u32, u32)> {
    let mut out: Vec<(u32, u32)> = Vec::new();
    for &b in bands {
        match out.last_mut() {
            Some((_, end)) if *end + 1 == b => *end = b,
            _ => out.push((b, b)),
        }
    }
    out
}

fn lesion_mask(ph: &Phantom, p: &Placement) -> RasterMask {
    let (w, h) = (ph.width, ph.height);
    let mut out = RasterMask::new(w, h);
    for side in [Side::Right, Side::Left] {
        let bands = bands_for(&p.zones, side);
        if bands.is_empty() {
            continue;
        }
        let (c0, c1) = ph.cols[&side];
        if p.shape == Shape::BasalBand {
            let span = ph.rows.1 - ph.rows.0 + 1;
            let n = (0.15 * span as f64).ceil() as u32;
            out.union_with(&RasterMask::rect(w, h, (ph.rows.1 + 1 - n, ph.rows.1), (c0, c1)))
                .expect("same grid");
            continue;
        }
        let n = ph.rows.1 - ph.rows.0 + 1;
        for (b0, b1) in runs(&bands) {
            let r0 = ph.rows.0 + b0 * n / 4;
            let r1 = ph.rows.0 + (b1 + 1) * n / 4 - 1;
            let (cr, cc) = ((r0 + r1) as f64 / 2.0, (c0 + c1) as f64 / 2.0);
            let (hr, hc) = ((r1 - r0 + 1) as f64 / 2.0, (c1 - c0 + 1) as f64 / 2.0);
            let (ar, ac) = (hr * 0.88, hc * 0.88);
            let m = RasterMask::from_fn(w, h, |r, c| {
                let dr = (r as f64 - cr) / ar;
                let dc = (c as f64 - cc) / ac;
                match p.shape {
                    Shape::Ellipse => dr * dr + dc * dc <= 1.0,
                    _ => dr.abs() <= 1.0 && dc.abs() <= 1.0,
                }
            });
            out.union_with(&m).expect("same grid");
        }
    }
    out
}

fn detection_label(l: LesionType) -> &'static str {
    match l {
        LesionType::Cardiomegaly => "Cardiomegaly",
        LesionType::Pneumonia | LesionType::Opacity => "Lung Opacity",
        LesionType::Atelectasis => "Atelectasis",
        LesionType::Consolidation => "Consolidation",
        LesionType::Edema => "Infiltration",
        LesionType::Effusion => "Pleural effusion",
    }
}

fn entity_word(l: LesionType, rng: &mut ChaCha8Rng) -> &'static str {
    match l {
        LesionType::Effusion if rng.random_bool(0.5) => "pleural effusion",
        LesionType::Edema if rng.random_bool(0.5) => "pulmonary edema",
        other => other.as_str(),
    }
}

fn location_phrase(zones: &BTreeSet<AnatomicalLabel>, rng: &mut ChaCha8Rng) -> String {
    let bases: BTreeSet<_> = [AnatomicalLabel::RightLungBase, AnatomicalLabel::LeftLungBase].into();
    if *zones == bases {
        return ["bibasilar", "lower lung", "bibasal"].choose(rng).expect("non-empty").to_string();
    }
    crate::templates::join_locations(zones)
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().collect::<String>() + c.as_str(),
        None => String::new(),
    }
}

fn sentence(p: &Placement, rng: &mut ChaCha8Rng) -> String {
    let tentative = p.certainty == Certainty::Tentative;
    let entity = entity_word(p.lesion, rng);
    if p.lesion == LesionType::Cardiomegaly {
        return if tentative { "Possibly cardiomegaly." } else { "Cardiomegaly." }.into();
    }
    let loc = location_phrase(&p.zones, rng);
    let form = if p.lesion.is_inference_target() {
        rng.random_range(0..3)
    } else {
        rng.random_range(0..2)
    };
    let s = match (form, tentative) {
        (0, false) => format!("{loc} {entity}."),
        (0, true) => format!("possibly {loc} {entity}."),
        (1, false) => format!("{entity} in the {loc}."),
        (1, true) => format!("possibly {entity} in the {loc}."),
        (_, false) => format!("the {loc} opacity is {entity}."),
        (_, true) => format!("the {loc} opacity may represent {entity}."),
    };
    capitalize(&s)
}

fn validate(spec: &StudySpec) -> Result<(), SynthError> {
    if spec.width < 32 || spec.height < 32 {
        return Err(SynthError::TooSmall(spec.width, spec.height));
    }
    for (index, p) in spec.placements.iter().enumerate() {
        let err = |message: &str| SynthError::Placement {
            index,
            message: message.to_string(),
        };
        if !(p.delta >= 0.0) {
            return Err(err("delta must be >= 0"));
        }
        if !(0.0..=1.0).contains(&p.confidence) {
            return Err(err("confidence must lie in [0, 1]"));
        }
        if p.lesion == LesionType::Cardiomegaly {
            if !p.zones.is_empty() {
                return Err(err("cardiomegaly takes no zones"));
            }
        } else if p.zones.is_empty() {
            return Err(err("lesion needs at least one zone"));
        }
        if p.shape == Shape::BasalBand {
            for side in [Side::Right, Side::Left] {
                let b = bands_for(&p.zones, side);
                if !b.is_empty() && !b.contains(&Zone::Base.band()) {
                    return Err(err("basal band needs the lung base"));
                }
            }
        }
    }
    Ok(())
}

fn study_rng(spec: &StudySpec) -> ChaCha8Rng {
    let d = Sha256::digest(format!("{}|{}", spec.seed, spec.study_id).as_bytes());
    let mut b = [0u8; 32];
    b.copy_from_slice(&d);
    ChaCha8Rng::from_seed(b)
}

/// Everything a synthetic study consists of, in memory.
#[derive(Debug, Clone)]
pub struct SynthStudy {
    pub image: ImageGray,
    pub edited: ImageGray,
    pub report: String,
    pub detections: Vec<DetectionBox>,
    pub phantom: Phantom,
    pub truth_masks: Vec<RasterMask>,
    pub truth: OracleTruth,
}

/// Builds a study in memory.
pub fn build_study(spec: &StudySpec) -> Result<SynthStudy, SynthError> {
    validate(spec)?;
    let mut rng = study_rng(spec);
    let enlarged = spec
        .placements
        .iter()
        .any(|p| p.lesion == LesionType::Cardiomegaly);
    let ph = Phantom::new(spec.width, spec.height, enlarged);
    let (w, h) = (spec.width, spec.height);

    let masks: Vec<RasterMask> = spec
        .placements
        .iter()
        .map(|p| {
            if p.lesion == LesionType::Cardiomegaly {
                ph.heart.clone()
            } else {
                lesion_mask(&ph, p)
            }
        })
        .collect();
    let lesion_idx: Vec<usize> = (0..masks.len())
        .filter(|&i| spec.placements[i].lesion != LesionType::Cardiomegaly)
        .collect();
    for (x, &i) in lesion_idx.iter().enumerate() {
        let grown = morph(&masks[i], MorphOp::Dilate, 1);
        for &j in &lesion_idx[x + 1..] {
            let (li, lj) = (spec.placements[i].lesion, spec.placements[j].lesion);
            if li != lj && grown.intersects(&masks[j]).expect("same grid") {
                return Err(SynthError::Overlap { a: i, la: li, b: j, lb: lj });
            }
        }
    }

    let i_max = 255.0;
    let mut bg = vec![0f64; (w * h) as usize];
    for r in 0..h {
        for c in 0..w {
            bg[(r * w + c) as usize] = ph.background(r);
        }
    }
    let mut px = bg.clone();
    let mut all_lesions = RasterMask::new(w, h);
    for &i in &lesion_idx {
        let add = spec.placements[i].delta * i_max;
        for (r, c) in masks[i].iter() {
            px[(r * w + c) as usize] += add;
        }
        all_lesions.union_with(&masks[i]).expect("same grid");
    }
    let keep_out = morph(&all_lesions, MorphOp::Dilate, 3);
    let mut placed = 0;
    let mut attempts = 0;
    while placed < spec.speckles && attempts < spec.speckles * 50 {
        attempts += 1;
        let (r, c) = (rng.random_range(0..h), rng.random_range(0..w));
        if keep_out.contains(r, c) {
            continue;
        }
        px[(r * w + c) as usize] += 60.0;
        placed += 1;
    }
    let to_u8 = |v: &[f64]| -> ImageGray {
        ImageGray::from_fn_u8(w, h, |r, c| v[(r * w + c) as usize].round().clamp(0.0, 255.0) as u8)
    };
    let image = to_u8(&px);
    let edited = to_u8(&bg);

    let mut detections = Vec::new();
    for &i in &lesion_idx {
        let p = &spec.placements[i];
        for side in [Side::Right, Side::Left] {
            let part = masks[i].intersection(ph.lung(side)).expect("same grid");
            let Some((r0, c0, r1, c1)) = part.bounding_box() else {
                continue;
            };
            let j = spec.noise.jitter_px as i64;
            let mut jit = |v: u32, max: u32| -> u32 {
                let d = if j > 0 { rng.random_range(-j..=j) } else { 0 };
                (v as i64 + d).clamp(0, max as i64 - 1) as u32
            };
            let (mut x0, mut y0, mut x1, mut y1) = (jit(c0, w), jit(r0, h), jit(c1, w), jit(r1, h));
            if x0 > x1 {
                std::mem::swap(&mut x0, &mut x1);
            }
            if y0 > y1 {
                std::mem::swap(&mut y0, &mut y1);
            }
            let n = spec.noise.confidence_noise;
            let conf = if n > 0.0 {
                p.confidence + rng.random_range(-n..=n)
            } else {
                p.confidence
            };
            detections.push(DetectionBox {
                label: detection_label(p.lesion).into(),
                confidence: conf.clamp(0.0, 1.0),
                x_min: x0,
                y_min: y0,
                x_max: x1,
                y_max: y1,
            });
        }
    }
    for _ in 0..spec.noise.decoys {
        let bw = rng.random_range(4..w / 4);
        let bh = rng.random_range(4..h / 4);
        let x0 = rng.random_range(0..w - bw);
        let y0 = rng.random_range(0..h - bh);
        detections.push(DetectionBox {
            label: "Lung Opacity".into(),
            confidence: rng.random_range(0.02..0.15),
            x_min: x0,
            y_min: y0,
            x_max: x0 + bw - 1,
            y_max: y0 + bh - 1,
        });
    }
    detections.push(DetectionBox {
        label: "Aortic enlargement".into(),
        confidence: 0.95,
        x_min: w / 2 - 3,
        y_min: frac(h, 0.2),
        x_max: w / 2 + 3,
        y_max: frac(h, 0.3),
    });

    let mut sentences = Vec::new();
    let mut lesions = Vec::new();
    for (i, p) in spec.placements.iter().enumerate() {
        sentences.push(sentence(p, &mut rng));
        lesions.push(TruthLesion {
            lesion: p.lesion,
            certainty: p.certainty,
            locations: p.zones.clone(),
            mask_path: PathBuf::from(format!("truth/{}_{i}.png", p.lesion.as_str())),
            sentence_index: sentences.len() as u32,
        });
    }
    for &l in &spec.negated {
        let word = entity_word(l, &mut rng);
        sentences.push(format!("No {word}."));
    }
    if sentences.is_empty() {
        sentences.push("No acute findings.".into());
    }
    let report = sentences.join(" ");

    let ctr = compute_ctr(&ph.right_lung, &ph.left_lung, &ph.heart).expect("phantom organs");
    let mut expected = Vec::new();
    for p in &spec.placements {
        if p.lesion == LesionType::Cardiomegaly {
            expected.push(ExpectedPair {
                lesion: p.lesion,
                template_type: TemplateType::Global,
                locations: BTreeSet::new(),
            });
            continue;
        }
        for t in [TemplateType::Basic, TemplateType::Global] {
            expected.push(ExpectedPair {
                lesion: p.lesion,
                template_type: t,
                locations: p.zones.clone(),
            });
        }
        if p.lesion.is_inference_target() {
            expected.push(ExpectedPair {
                lesion: p.lesion,
                template_type: TemplateType::LesionInference,
                locations: p.zones.clone(),
            });
        }
    }
    let positives: BTreeSet<LesionType> = spec.placements.iter().map(|p| p.lesion).collect();
    let negative_eligible = LesionType::ALL
        .iter()
        .copied()
        .filter(|l| match l {
            LesionType::Cardiomegaly => !positives.contains(l) && ctr <= 0.45,
            _ => true,
        })
        .collect();

    let truth_masks = masks;
    Ok(SynthStudy {
        image,
        edited,
        report,
        detections,
        phantom: ph,
        truth_masks,
        truth: OracleTruth {
            study_id: spec.study_id.clone(),
            lesions,
            ctr,
            report: String::new(),
            expected_positive_pairs: expected,
            negative_eligible,
        },
    })
    .map(|mut s| {
        s.truth.report = s.report.clone();
        s
    })
}

/// Writes a study under `root/<study_id>/` and returns its manifest record
/// (paths relative to `root`) and oracle truth.
pub fn make_study(spec: &StudySpec, root: &Path) -> Result<(Study, OracleTruth), SynthError> {
    let s = build_study(spec)?;
    let id = &spec.study_id;
    let dir = root.join(id);
    let rel = |p: &str| PathBuf::from(id).join(p);

    io::write_image(&dir.join("image.png"), &s.image)?;
    io::write_image(&dir.join("edited.png"), &s.edited)?;
    io::write_atomic(&dir.join("report.txt"), format!("{}\n", s.report).as_bytes())?;
    io::write_detections(&dir.join("detections.json"), &s.detections)?;
    for (label, m) in &s.phantom.anatomy {
        io::write_mask(&dir.join("anatomy").join(format!("{}.png", label.file_stem())), m)?;
    }
    io::write_mask(&dir.join("anatomy/heart.png"), &s.phantom.heart)?;
    io::write_mask(&dir.join("organs/right_lung.png"), &s.phantom.right_lung)?;
    io::write_mask(&dir.join("organs/left_lung.png"), &s.phantom.left_lung)?;
    io::write_mask(&dir.join("organs/heart.png"), &s.phantom.heart)?;
    for (t, m) in s.truth.lesions.iter().zip(&s.truth_masks) {
        io::write_mask(&dir.join(&t.mask_path), m)?;
    }
    io::write_json(&dir.join("oracle_truth.json"), &s.truth)?;

    let study = Study {
        study_id: id.clone(),
        image: rel("image.png"),
        report: rel("report.txt"),
        split: spec.split,
        provider_artifacts: ProviderArtifacts {
            edited_image: rel("edited.png"),
            anatomy_mask_directory: rel("anatomy"),
            detections_file: rel("detections.json"),
            organ_masks: OrganMaskPaths {
                right_lung: rel("organs/right_lung.png"),
                left_lung: rel("organs/left_lung.png"),
                heart: rel("organs/heart.png"),
            },
            findings_file: None,
        },
        qc_flags: spec.qc_flags.clone(),
    };
    Ok((study, s.truth))
}

/// Writes every study plus `manifest.jsonl` under `root`.
pub fn write_corpus(specs: &[StudySpec], root: &Path) -> Result<(Manifest, Vec<OracleTruth>), SynthError> {
    let mut studies = Vec::with_capacity(specs.len());
    let mut truths = Vec::with_capacity(specs.len());
    for spec in specs {
        let (s, t) = make_study(spec, root)?;
        studies.push(s);
        truths.push(t);
    }
    let manifest = Manifest {
        root: root.to_path_buf(),
        studies,
    };
    manifest.write(&root.join("manifest.jsonl"))?;
    Ok((manifest, truths))
}

/// Lesion location choices used by [`corpus_specs`]: each is a set of zone
/// labels; the symmetric ones place one region per lung.
fn location_options() -> Vec<Vec<AnatomicalLabel>> {
    use AnatomicalLabel::*;
    let mut out = Vec::new();
    for side in [Side::Right, Side::Left] {
        for z in Zone::ALL {
            out.push(vec![AnatomicalLabel::from_parts(side, Some(z))]);
        }
        out.push(vec![
            AnatomicalLabel::from_parts(side, Some(Zone::Upper)),
            AnatomicalLabel::from_parts(side, Some(Zone::Mid)),
        ]);
    }
    for z in Zone::ALL {
        out.push(vec![
            AnatomicalLabel::from_parts(Side::Right, Some(z)),
            AnatomicalLabel::from_parts(Side::Left, Some(z)),
        ]);
    }
    out.push(vec![RightLung]);
    out.push(vec![LeftLung]);
    out
}

fn covered_bands(zones: &[AnatomicalLabel]) -> BTreeSet<(Side, u32)> {
    let set: BTreeSet<_> = zones.iter().copied().collect();
    let mut out = BTreeSet::new();
    for side in [Side::Right, Side::Left] {
        for b in bands_for(&set, side) {
            out.insert((side, b));
        }
    }
    out
}

/// A seeded corpus of `n` random studies on 128×128 phantoms. Each zone
/// hosts at most one lesion and neighbouring lesions never touch.
pub fn corpus_specs(n: usize, seed: u64, noise: DetectorNoise) -> Vec<StudySpec> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let options = location_options();
    let lung_lesions = [
        LesionType::Pneumonia,
        LesionType::Atelectasis,
        LesionType::Opacity,
        LesionType::Consolidation,
        LesionType::Edema,
        LesionType::Effusion,
    ];
    let mut specs = Vec::with_capacity(n);
    for i in 0..n {
        let mut used: BTreeSet<(Side, u32)> = BTreeSet::new();
        let mut placements = Vec::new();
        let count = rng.random_range(0..=3);
        let mut kinds = lung_lesions.to_vec();
        kinds.shuffle(&mut rng);
        for &lesion in kinds.iter().take(count) {
            let candidates: Vec<&Vec<AnatomicalLabel>> = options
                .iter()
                .filter(|zones| {
                    let bands = covered_bands(zones);
                    // keep one free band between lesions so they never touch
                    bands.iter().all(|&(s, b)| {
                        !used.contains(&(s, b))
                            && !used.contains(&(s, b + 1))
                            && (b == 0 || !used.contains(&(s, b - 1)))
                    }) && (lesion != LesionType::Effusion
                        || bands.iter().all(|&(_, b)| b == Zone::Base.band()))
                })
                .collect();
            let Some(zones) = candidates.choose(&mut rng) else {
                continue;
            };
            used.extend(covered_bands(zones));
            let shape = if lesion == LesionType::Effusion {
                Shape::BasalBand
            } else if rng.random_bool(0.8) {
                Shape::Ellipse
            } else {
                Shape::Rect
            };
            placements.push(Placement {
                lesion,
                zones: zones.iter().copied().collect(),
                certainty: if rng.random_bool(0.25) {
                    Certainty::Tentative
                } else {
                    Certainty::Definitive
                },
                shape,
                delta: rng.random_range(0.15..0.45),
                confidence: rng.random_range(0.6..1.0),
            });
        }
        if rng.random_bool(0.2) {
            placements.push(Placement {
                lesion: LesionType::Cardiomegaly,
                zones: BTreeSet::new(),
                certainty: Certainty::Definitive,
                shape: Shape::Rect,
                delta: 0.0,
                confidence: 1.0,
            });
        }
        let present: BTreeSet<_> = placements.iter().map(|p| p.lesion).collect();
        let negated = LesionType::ALL
            .iter()
            .copied()
            .filter(|l| !present.contains(l) && rng.random_bool(0.15))
            .collect();
        let split = match i % 10 {
            0 => Split::Test,
            1 => Split::Validation,
            _ => Split::Train,
        };
        specs.push(StudySpec {
            study_id: format!("syn{i:04}"),
            width: 128,
            height: 128,
            split,
            placements,
            negated,
            noise,
            speckles: 12,
            qc_flags: Vec::new(),
            seed: rng.random(),
        });
    }
    specs
}
