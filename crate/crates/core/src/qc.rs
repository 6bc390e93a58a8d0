//! Study quality control: lung/heart mask cross-checks between two mask
//! providers, the cardiothoracic ratio, and precomputed image flags.

use serde::{Deserialize, Serialize};

use crate::mask::{check_dims, RasterError, RasterMask};
use crate::study::OrganMasks;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrossCheck {
    pub pass: bool,
    pub reasons: Vec<String>,
}

/// Outer column of a lung: the leftmost column for the lung lying on the
/// image's left, the rightmost for the other.
fn outer_col(lung: &RasterMask, other: &RasterMask) -> Option<u32> {
    let (lmin, lmax) = lung.col_span()?;
    let center = (lmin + lmax) as f64 / 2.0;
    let other_center = other
        .col_span()
        .map(|(a, b)| (a + b) as f64 / 2.0)
        .unwrap_or(f64::INFINITY);
    Some(if center <= other_center { lmin } else { lmax })
}

/// Compares outermost lung columns and the lowest heart row between two mask
/// sets. Fails when either differs by more than `rel_tol` of the image
/// width or height.
pub fn cross_check_masks(
    primary: &OrganMasks,
    secondary: &OrganMasks,
    rel_tol: f64,
) -> Result<CrossCheck, RasterError> {
    let dims = primary.right_lung.dims();
    for m in [
        &primary.left_lung,
        &primary.heart,
        &secondary.right_lung,
        &secondary.left_lung,
        &secondary.heart,
    ] {
        check_dims(dims, m.dims())?;
    }
    let (w, h) = dims;
    let mut reasons = Vec::new();
    let named = [
        ("primary right lung", &primary.right_lung),
        ("primary left lung", &primary.left_lung),
        ("primary heart", &primary.heart),
        ("secondary right lung", &secondary.right_lung),
        ("secondary left lung", &secondary.left_lung),
        ("secondary heart", &secondary.heart),
    ];
    for (name, m) in named {
        if m.is_empty() {
            reasons.push(format!("empty mask: {name}"));
        }
    }
    if !reasons.is_empty() {
        return Ok(CrossCheck {
            pass: false,
            reasons,
        });
    }

    let x_tol = rel_tol * w as f64;
    let lungs = [
        ("right lung", &primary.right_lung, &primary.left_lung, &secondary.right_lung, &secondary.left_lung),
        ("left lung", &primary.left_lung, &primary.right_lung, &secondary.left_lung, &secondary.right_lung),
    ];
    for (name, p, p_other, s, s_other) in lungs {
        let a = outer_col(p, p_other).expect("non-empty");
        let b = outer_col(s, s_other).expect("non-empty");
        let diff = a.abs_diff(b) as f64;
        if diff > x_tol {
            reasons.push(format!(
                "{name} outermost column differs by {diff} px (limit {x_tol:.1})"
            ));
        }
    }
    let y_tol = rel_tol * h as f64;
    let a = primary.heart.row_span().expect("non-empty").1;
    let b = secondary.heart.row_span().expect("non-empty").1;
    let diff = a.abs_diff(b) as f64;
    if diff > y_tol {
        reasons.push(format!(
            "heart lowermost row differs by {diff} px (limit {y_tol:.1})"
        ));
    }
    Ok(CrossCheck {
        pass: reasons.is_empty(),
        reasons,
    })
}

/// Heart column span over the column span of both lungs together.
pub fn compute_ctr(
    right_lung: &RasterMask,
    left_lung: &RasterMask,
    heart: &RasterMask,
) -> Result<f64, RasterError> {
    if heart.is_empty() {
        return Err(RasterError::EmptyMask("heart"));
    }
    if right_lung.is_empty() {
        return Err(RasterError::EmptyMask("right lung"));
    }
    if left_lung.is_empty() {
        return Err(RasterError::EmptyMask("left lung"));
    }
    check_dims(heart.dims(), right_lung.dims())?;
    let lungs = right_lung.union(left_lung)?;
    let (h0, h1) = heart.col_span().expect("non-empty");
    let (l0, l1) = lungs.col_span().expect("non-empty");
    Ok((h1 - h0 + 1) as f64 / (l1 - l0 + 1) as f64)
}

/// QC outcome for one study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QcRecord {
    pub study_id: String,
    pub flags: Vec<String>,
    pub ctr: Option<f64>,
    pub cross_check: CrossCheck,
}

impl QcRecord {
    pub fn passed(&self) -> bool {
        self.flags.is_empty() && self.cross_check.pass
    }
}

/// Runs every study-level check.
pub fn assess(
    study_id: &str,
    flags: &[String],
    primary: &OrganMasks,
    secondary: &OrganMasks,
    rel_tol: f64,
) -> Result<QcRecord, RasterError> {
    let cross_check = cross_check_masks(primary, secondary, rel_tol)?;
    let ctr = compute_ctr(&primary.right_lung, &primary.left_lung, &primary.heart).ok();
    Ok(QcRecord {
        study_id: study_id.to_string(),
        flags: flags.to_vec(),
        ctr,
        cross_check,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn organs(w: u32, h: u32, shift: u32, heart_bottom: u32) -> OrganMasks {
        OrganMasks {
            right_lung: RasterMask::rect(w, h, (10, 80), (5 + shift, 40)),
            left_lung: RasterMask::rect(w, h, (10, 80), (60, 95)),
            heart: RasterMask::rect(w, h, (40, heart_bottom), (35, 65)),
        }
    }

    #[test]
    fn cross_check_examples() {
        let a = organs(100, 100, 0, 70);
        assert!(cross_check_masks(&a, &a, 0.05).unwrap().pass);
        let shifted = organs(100, 100, 20, 70);
        let r = cross_check_masks(&a, &shifted, 0.05).unwrap();
        assert!(!r.pass);
        assert!(r.reasons[0].contains("right lung"));
        let tall_a = organs(100, 512, 0, 300);
        let tall_b = organs(100, 512, 0, 301);
        assert!(cross_check_masks(&tall_a, &tall_b, 0.05).unwrap().pass);
        let mut empty = a.clone();
        empty.heart = RasterMask::new(100, 100);
        let r = cross_check_masks(&a, &empty, 0.05).unwrap();
        assert!(!r.pass && r.reasons[0].starts_with("empty mask"));
    }

    #[test]
    fn ctr_examples() {
        let rl = RasterMask::rect(40, 10, (0, 5), (5, 12));
        let ll = RasterMask::rect(40, 10, (0, 5), (17, 24));
        let heart = RasterMask::rect(40, 10, (3, 6), (20, 28));
        // lungs span cols 5..=24, heart cols 20..=28
        assert!((compute_ctr(&rl, &ll, &heart).unwrap() - 0.45).abs() < 1e-12);
        let full = RasterMask::rect(40, 10, (3, 6), (5, 24));
        assert_eq!(compute_ctr(&rl, &ll, &full).unwrap(), 1.0);
        let half = RasterMask::rect(40, 10, (3, 6), (10, 19));
        assert_eq!(compute_ctr(&rl, &ll, &half).unwrap(), 0.5);
        assert!(compute_ctr(&rl, &ll, &RasterMask::new(40, 10)).is_err());
    }

    proptest! {
        #[test]
        fn ctr_translation_invariant(
            l0 in 0u32..10, lw in 4u32..10, gap in 0u32..6, rw in 4u32..10,
            h0 in 0u32..8, hw in 1u32..12, shift in 0u32..10,
        ) {
            let w = 80;
            let make = |s: u32| {
                let rl = RasterMask::rect(w, 5, (0, 4), (l0 + s, l0 + lw + s));
                let ll = RasterMask::rect(w, 5, (0, 4), (l0 + lw + gap + 1 + s, l0 + lw + gap + 1 + rw + s));
                let heart = RasterMask::rect(w, 5, (1, 3), (l0 + h0 + s, l0 + h0 + hw + s));
                compute_ctr(&rl, &ll, &heart).unwrap()
            };
            prop_assert_eq!(make(0), make(shift));
        }
    }
}
