//! Spatial grounding: anomaly maps, detection-box filtering, lesion-mask
//! extraction and refinement, and location verification.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::config::{Config, RefineConfig, ThresholdSet};
use crate::mask::{check_dims, ImageGray, RasterError, RasterMask};
use crate::model::{AnatomicalLabel, DetectionBox, GroundedLesion, LesionType, StructuredFinding};
use crate::raster::{box_to_mask, connected_components, intensity_expand, iou, opening};
use crate::study::StudyArtifacts;

/// Detector classes that never take part in grounding.
pub const EXCLUDED_DETECTION_LABELS: &[&str] = &["aortic enlargement", "other lesion", "pneumothorax"];

pub fn is_excluded_detection(label: &str) -> bool {
    let l = label.trim().to_lowercase();
    EXCLUDED_DETECTION_LABELS.contains(&l.as_str())
}

/// Normalized difference between an image and its edited counterpart, and
/// the set of pixels at or above `tau_ano`.
#[derive(Debug, Clone, PartialEq)]
pub struct AnomalyMap {
    width: u32,
    height: u32,
    raw: Vec<f64>,
    tau_ano: f64,
    thresholded: RasterMask,
}

impl AnomalyMap {
    pub fn raw(&self, row: u32, col: u32) -> f64 {
        self.raw[row as usize * self.width as usize + col as usize]
    }

    pub fn tau_ano(&self) -> f64 {
        self.tau_ano
    }

    pub fn thresholded(&self) -> &RasterMask {
        &self.thresholded
    }

    pub fn dims(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    /// Same field, different cut-off.
    pub fn with_threshold(&self, tau_ano: f64) -> AnomalyMap {
        let thresholded = threshold(self.width, self.height, &self.raw, tau_ano);
        AnomalyMap {
            tau_ano,
            thresholded,
            ..self.clone()
        }
    }
}

fn threshold(width: u32, height: u32, raw: &[f64], tau: f64) -> RasterMask {
    RasterMask::from_fn(width, height, |r, c| {
        raw[r as usize * width as usize + c as usize] >= tau
    })
}

pub fn compute_anomaly_map(
    x: &ImageGray,
    x_edit: &ImageGray,
    tau_ano: f64,
) -> Result<AnomalyMap, RasterError> {
    check_dims(x.dims(), x_edit.dims())?;
    if x.bit_depth() != x_edit.bit_depth() {
        return Err(RasterError::InvalidImage(format!(
            "bit depth mismatch: {} vs {}",
            x.bit_depth(),
            x_edit.bit_depth()
        )));
    }
    let i_max = x.max_intensity() as f64;
    let raw: Vec<f64> = x
        .pixels()
        .iter()
        .zip(x_edit.pixels())
        .map(|(&a, &b)| (a as f64 - b as f64) / i_max)
        .collect();
    let (width, height) = x.dims();
    let thresholded = threshold(width, height, &raw, tau_ano);
    Ok(AnomalyMap {
        width,
        height,
        raw,
        tau_ano,
        thresholded,
    })
}

/// Outcome of the four box tests. Boxes that fail their own invariants get
/// every test false and a `problem` note.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxFilterVerdict {
    pub box_index: usize,
    pub c1: bool,
    pub c2: bool,
    pub c3: bool,
    pub c4: bool,
    pub accepted: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub problem: Option<String>,
}

/// Evaluates each box against the anatomy union of the reported locations,
/// the anomaly set `a`, and the two lung masks.
pub fn filter_boxes(
    boxes: &[DetectionBox],
    anatomy_union: &RasterMask,
    a: &RasterMask,
    lungs: (&RasterMask, &RasterMask),
    t: &ThresholdSet,
) -> Result<Vec<BoxFilterVerdict>, RasterError> {
    let (w, h) = anatomy_union.dims();
    check_dims((w, h), a.dims())?;
    check_dims((w, h), lungs.0.dims())?;
    check_dims((w, h), lungs.1.dims())?;
    let mut out = Vec::with_capacity(boxes.len());
    for (i, b) in boxes.iter().enumerate() {
        let problems = b.violations(w, h);
        if !problems.is_empty() {
            out.push(BoxFilterVerdict {
                box_index: i,
                c1: false,
                c2: false,
                c3: false,
                c4: false,
                accepted: false,
                problem: Some(problems.join("; ")),
            });
            continue;
        }
        let bm = box_to_mask(b, w, h)?;
        let c1 = iou(&bm, anatomy_union)? >= t.tau_anatomy;
        let c2 = b.confidence >= t.tau_conf;
        let c3 = bm.intersection_count(a)? as f64 / bm.len() as f64 >= t.tau_signal;
        let c4 = iou(&bm, lungs.0)? >= t.tau_size || iou(&bm, lungs.1)? >= t.tau_size;
        out.push(BoxFilterVerdict {
            box_index: i,
            c1,
            c2,
            c3,
            c4,
            accepted: c1 && c2 && c3 && c4,
            problem: None,
        });
    }
    Ok(out)
}

/// Components of `a` that share at least one pixel with any of `boxes`,
/// each listed once, in component order.
pub fn intersecting_components(
    boxes: &[DetectionBox],
    a: &RasterMask,
) -> Result<Vec<RasterMask>, RasterError> {
    let (w, h) = a.dims();
    let masks = boxes
        .iter()
        .map(|b| box_to_mask(b, w, h))
        .collect::<Result<Vec<_>, _>>()?;
    let mut out = Vec::new();
    for comp in connected_components(a) {
        if masks.iter().any(|m| m.intersects(&comp).unwrap_or(false)) {
            out.push(comp);
        }
    }
    Ok(out)
}

/// Lung and image context needed by [`refine`].
#[derive(Debug, Clone, Copy)]
pub struct RefineContext<'a> {
    pub image: &'a ImageGray,
    pub lesion: LesionType,
    pub right_lung: &'a RasterMask,
    pub left_lung: &'a RasterMask,
}

/// Union of the refined components of `a` hit by `accepted_boxes`. A
/// component hit by several boxes is refined once.
pub fn extract_lesion_mask(
    accepted_boxes: &[DetectionBox],
    a: &RasterMask,
    ctx: &RefineContext<'_>,
    cfg: &RefineConfig,
) -> Result<RasterMask, RasterError> {
    let (w, h) = a.dims();
    let mut out = RasterMask::new(w, h);
    for comp in intersecting_components(accepted_boxes, a)? {
        out.union_with(&refine(&comp, ctx, cfg)?)?;
    }
    Ok(out)
}

/// Post-processing of one candidate component: speckle removal, small-area
/// pruning, intensity-guided growth and, for effusions, filling the lung base.
pub fn refine(
    c: &RasterMask,
    ctx: &RefineContext<'_>,
    cfg: &RefineConfig,
) -> Result<RasterMask, RasterError> {
    check_dims(c.dims(), ctx.image.dims())?;
    check_dims(c.dims(), ctx.right_lung.dims())?;
    check_dims(c.dims(), ctx.left_lung.dims())?;
    let (w, h) = c.dims();

    let opened = opening(c, cfg.noise_iterations);

    let lungs_union = ctx.right_lung.union(ctx.left_lung)?;
    let mut kept = RasterMask::new(w, h);
    for comp in connected_components(&opened) {
        let r = comp.intersection_count(ctx.right_lung)?;
        let l = comp.intersection_count(ctx.left_lung)?;
        let reference = match (r, l) {
            (0, 0) => lungs_union.len(),
            _ if r >= l => ctx.right_lung.len(),
            _ => ctx.left_lung.len(),
        };
        if comp.len() as f64 >= cfg.min_area_fraction * reference as f64 {
            kept.union_with(&comp)?;
        }
    }

    let mut out = intensity_expand(&kept, ctx.image, cfg.delta, cfg.max_rounds)?;

    if ctx.lesion == LesionType::Effusion {
        for lung in [ctx.right_lung, ctx.left_lung] {
            let zone = lowest_rows(lung, cfg.base_zone_fraction);
            if out.intersects(&zone)? {
                out.union_with(&lowest_rows(lung, cfg.base_fraction))?;
            }
        }
    }
    Ok(out)
}

/// Members of `lung` in the lowest `ceil(fraction × row span)` rows of its
/// row span.
pub fn lowest_rows(lung: &RasterMask, fraction: f64) -> RasterMask {
    let (w, h) = lung.dims();
    let Some((top, bottom)) = lung.row_span() else {
        return RasterMask::new(w, h);
    };
    let span = (bottom - top + 1) as f64;
    let n = (fraction * span).ceil() as u32;
    if n == 0 {
        return RasterMask::new(w, h);
    }
    let first = bottom + 1 - n.min(bottom - top + 1);
    RasterMask::from_fn(w, h, |r, c| r >= first && lung.contains(r, c))
}

/// Why a positive finding produced no grounded lesion.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "reason")]
pub enum Rejection {
    EmptyMask,
    NotGrounded,
}

/// Union of the anatomy masks of `labels`.
pub fn anatomy_union(
    labels: &BTreeSet<AnatomicalLabel>,
    anatomy: &BTreeMap<AnatomicalLabel, RasterMask>,
    dims: (u32, u32),
) -> Result<RasterMask, RasterError> {
    let mut out = RasterMask::new(dims.0, dims.1);
    for l in labels {
        if let Some(m) = anatomy.get(l) {
            out.union_with(m)?;
        }
    }
    Ok(out)
}

/// Lung labels with a non-empty anatomy mask that touches no location
/// reported anywhere in the study.
pub fn empty_locations(
    anatomy: &BTreeMap<AnatomicalLabel, RasterMask>,
    study_reported: &BTreeSet<AnatomicalLabel>,
    dims: (u32, u32),
) -> Result<BTreeSet<AnatomicalLabel>, RasterError> {
    let reported_union = anatomy_union(study_reported, anatomy, dims)?;
    let mut out = BTreeSet::new();
    for (&label, m) in anatomy {
        if !m.is_empty() && !study_reported.contains(&label) && !m.intersects(&reported_union)? {
            out.insert(label);
        }
    }
    Ok(out)
}

/// Checks which reported locations the mask actually covers and attaches the
/// study's empty locations.
pub fn verify_locations(
    finding: &StructuredFinding,
    lesion: LesionType,
    lesion_mask: &RasterMask,
    anatomy: &BTreeMap<AnatomicalLabel, RasterMask>,
    study_reported: &BTreeSet<AnatomicalLabel>,
    source_finding_index: usize,
) -> Result<Result<GroundedLesion, Rejection>, RasterError> {
    if lesion_mask.is_empty() {
        return Ok(Err(Rejection::EmptyMask));
    }
    let mut grounded = BTreeSet::new();
    for l in &finding.reported_locations {
        if let Some(m) = anatomy.get(l) {
            if m.intersects(lesion_mask)? {
                grounded.insert(*l);
            }
        }
    }
    if grounded.is_empty() {
        return Ok(Err(Rejection::NotGrounded));
    }
    let mut empty = empty_locations(anatomy, study_reported, lesion_mask.dims())?;
    empty.retain(|l| !finding.reported_locations.contains(l));
    Ok(Ok(GroundedLesion {
        lesion,
        certainty: finding.certainty,
        mask: lesion_mask.clone(),
        reported_locations: finding.reported_locations.clone(),
        grounded_locations: grounded,
        empty_locations: empty,
        source_finding_index,
    }))
}

/// Per-finding trace written to the grounding record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FindingTrace {
    pub finding_index: usize,
    pub entity: String,
    pub lesion: Option<LesionType>,
    pub outcome: TraceOutcome,
    pub verdicts: Vec<BoxFilterVerdict>,
    pub reported: BTreeSet<AnatomicalLabel>,
    pub grounded: BTreeSet<AnatomicalLabel>,
    pub empty: BTreeSet<AnatomicalLabel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask_path: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceOutcome {
    Grounded,
    Rejected(Rejection),
    /// Negative finding; informs negatives only.
    Negative,
    /// Entity outside the seven lesion types.
    NotTarget,
}

/// All grounding results for one study.
#[derive(Debug, Clone)]
pub struct StudyGrounding {
    pub lesions: Vec<GroundedLesion>,
    pub traces: Vec<FindingTrace>,
    /// Empty locations computed against every reported label in the study.
    pub empty_locations: BTreeSet<AnatomicalLabel>,
}

/// Runs grounding for every finding of a study.
pub fn ground_study(
    art: &StudyArtifacts,
    findings: &[StructuredFinding],
    cfg: &Config,
) -> Result<StudyGrounding, RasterError> {
    let dims = art.image.dims();
    let study_reported: BTreeSet<AnatomicalLabel> = findings
        .iter()
        .filter(|f| f.is_positive())
        .flat_map(|f| f.reported_locations.iter().copied())
        .collect();
    let study_empty = empty_locations(&art.anatomy, &study_reported, dims)?;
    let boxes: Vec<DetectionBox> = art
        .detections
        .iter()
        .filter(|b| !is_excluded_detection(&b.label))
        .cloned()
        .collect();
    let lungs = (&art.organs.right_lung, &art.organs.left_lung);
    let field = compute_anomaly_map(&art.image, &art.edited, 0.0)?;
    let mut anomaly_cache: BTreeMap<u64, RasterMask> = BTreeMap::new();

    let mut lesions = Vec::new();
    let mut traces = Vec::new();
    for (idx, f) in findings.iter().enumerate() {
        let lesion = f.target_lesion();
        let mut trace = FindingTrace {
            finding_index: idx,
            entity: f.entity.clone(),
            lesion,
            outcome: TraceOutcome::NotTarget,
            verdicts: Vec::new(),
            reported: f.reported_locations.clone(),
            grounded: BTreeSet::new(),
            empty: BTreeSet::new(),
            mask_path: None,
        };
        let Some(lesion) = lesion else {
            traces.push(trace);
            continue;
        };
        if !f.is_positive() {
            trace.outcome = TraceOutcome::Negative;
            traces.push(trace);
            continue;
        }
        if lesion == LesionType::Cardiomegaly {
            let g = GroundedLesion {
                lesion,
                certainty: f.certainty,
                mask: art.organs.heart.clone(),
                reported_locations: BTreeSet::new(),
                grounded_locations: BTreeSet::new(),
                empty_locations: study_empty.clone(),
                source_finding_index: idx,
            };
            trace.outcome = TraceOutcome::Grounded;
            trace.empty = g.empty_locations.clone();
            traces.push(trace);
            lesions.push(g);
            continue;
        }

        let t = cfg.thresholds.for_lesion(lesion);
        let a = anomaly_cache
            .entry(t.tau_ano.to_bits())
            .or_insert_with(|| {
                opening(field.with_threshold(t.tau_ano).thresholded(), cfg.refine.noise_iterations)
            })
            .clone();
        let union = anatomy_union(&f.reported_locations, &art.anatomy, dims)?;
        let verdicts = filter_boxes(&boxes, &union, &a, lungs, &t)?;
        let accepted: Vec<DetectionBox> = verdicts
            .iter()
            .filter(|v| v.accepted)
            .map(|v| boxes[v.box_index].clone())
            .collect();
        let ctx = RefineContext {
            image: &art.image,
            lesion,
            right_lung: lungs.0,
            left_lung: lungs.1,
        };
        let mask = extract_lesion_mask(&accepted, &a, &ctx, &cfg.refine)?;
        trace.verdicts = verdicts;
        match verify_locations(f, lesion, &mask, &art.anatomy, &study_reported, idx)? {
            Ok(g) => {
                trace.outcome = TraceOutcome::Grounded;
                trace.grounded = g.grounded_locations.clone();
                trace.empty = g.empty_locations.clone();
                lesions.push(g);
            }
            Err(r) => trace.outcome = TraceOutcome::Rejected(r),
        }
        traces.push(trace);
    }
    Ok(StudyGrounding {
        lesions,
        traces,
        empty_locations: study_empty,
    })
}
