//! Pixel-set algebra over [`RasterMask`]: overlap ratios, 8-connected
//! components, binary morphology with a full 3×3 element, and
//! intensity-guided region growing.

use std::collections::VecDeque;

use crate::mask::{check_dims, ImageGray, RasterError, RasterMask};
use crate::model::DetectionBox;

const NEIGHBORS_8: [(i64, i64); 8] = [
    (-1, -1),
    (-1, 0),
    (-1, 1),
    (0, -1),
    (0, 1),
    (1, -1),
    (1, 0),
    (1, 1),
];

/// `|a ∩ b| / |a ∪ b|`, or 0 when both are empty.
pub fn iou(a: &RasterMask, b: &RasterMask) -> Result<f64, RasterError> {
    let inter = a.intersection_count(b)?;
    let union = a.union_count(b)?;
    Ok(if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    })
}

/// `|inner ∩ outer| / |inner|`.
pub fn containment_ratio(inner: &RasterMask, outer: &RasterMask) -> Result<f64, RasterError> {
    let inter = inner.intersection_count(outer)?;
    let n = inner.len();
    if n == 0 {
        return Err(RasterError::EmptyMask("inner"));
    }
    Ok(inter as f64 / n as f64)
}

/// Maximal 8-connected components, ordered by their topmost-then-leftmost
/// member.
pub fn connected_components(m: &RasterMask) -> Vec<RasterMask> {
    let (w, h) = m.dims();
    let mut seen = vec![false; w as usize * h as usize];
    let mut out = Vec::new();
    let mut queue = VecDeque::new();
    // Row-major seeding visits components in topmost-then-leftmost order.
    for (r, c) in m.iter() {
        let idx = r as usize * w as usize + c as usize;
        if seen[idx] {
            continue;
        }
        seen[idx] = true;
        let mut comp = RasterMask::new(w, h);
        queue.push_back((r, c));
        while let Some((r, c)) = queue.pop_front() {
            comp.insert(r, c);
            for (dr, dc) in NEIGHBORS_8 {
                let (nr, nc) = (r as i64 + dr, c as i64 + dc);
                if !m.in_bounds(nr, nc) {
                    continue;
                }
                let (nr, nc) = (nr as u32, nc as u32);
                let nidx = nr as usize * w as usize + nc as usize;
                if !seen[nidx] && m.contains(nr, nc) {
                    seen[nidx] = true;
                    queue.push_back((nr, nc));
                }
            }
        }
        out.push(comp);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MorphOp {
    Erode,
    Dilate,
}

/// Binary erosion or dilation with the full 3×3 element, repeated
/// `iterations` times. Pixels outside the grid count as background.
pub fn morph(m: &RasterMask, op: MorphOp, iterations: u32) -> RasterMask {
    let mut cur = m.clone();
    for _ in 0..iterations {
        cur = morph_once(&cur, op);
    }
    cur
}

fn morph_once(m: &RasterMask, op: MorphOp) -> RasterMask {
    let (w, h) = m.dims();
    RasterMask::from_fn(w, h, |r, c| {
        let mut hood = (-1i64..=1).flat_map(|dr| (-1i64..=1).map(move |dc| (dr, dc)));
        let member = |(dr, dc): (i64, i64)| {
            let (nr, nc) = (r as i64 + dr, c as i64 + dc);
            m.in_bounds(nr, nc) && m.contains(nr as u32, nc as u32)
        };
        match op {
            MorphOp::Erode => hood.all(member),
            MorphOp::Dilate => hood.any(member),
        }
    })
}

/// Erosion followed by dilation, `iterations` of each.
pub fn opening(m: &RasterMask, iterations: u32) -> RasterMask {
    morph(&morph(m, MorphOp::Erode, iterations), MorphOp::Dilate, iterations)
}

/// Grows `m` by rounds. Each round computes the mean intensity of the current
/// members and adds every 8-adjacent non-member whose intensity lies within
/// `delta` of that mean. Stops at a fixpoint or after `max_rounds`.
pub fn intensity_expand(
    m: &RasterMask,
    image: &ImageGray,
    delta: f64,
    max_rounds: u32,
) -> Result<RasterMask, RasterError> {
    check_dims(m.dims(), image.dims())?;
    let mut cur = m.clone();
    for _ in 0..max_rounds {
        let n = cur.len();
        if n == 0 {
            break;
        }
        let mean = cur
            .iter()
            .map(|(r, c)| image.get(r, c) as f64)
            .sum::<f64>()
            / n as f64;
        let mut added = Vec::new();
        for (r, c) in cur.iter() {
            for (dr, dc) in NEIGHBORS_8 {
                let (nr, nc) = (r as i64 + dr, c as i64 + dc);
                if !cur.in_bounds(nr, nc) {
                    continue;
                }
                let (nr, nc) = (nr as u32, nc as u32);
                if !cur.contains(nr, nc) && (image.get(nr, nc) as f64 - mean).abs() <= delta {
                    added.push((nr, nc));
                }
            }
        }
        if added.is_empty() {
            break;
        }
        for (r, c) in added {
            cur.insert(r, c);
        }
    }
    Ok(cur)
}

/// The inclusive rectangle of a detection box.
pub fn box_to_mask(b: &DetectionBox, width: u32, height: u32) -> Result<RasterMask, RasterError> {
    if b.x_min > b.x_max || b.y_min > b.y_max || b.x_max >= width || b.y_max >= height {
        return Err(RasterError::BoxOutOfBounds {
            x_min: b.x_min,
            y_min: b.y_min,
            x_max: b.x_max,
            y_max: b.y_max,
            width,
            height,
        });
    }
    Ok(RasterMask::rect(
        width,
        height,
        (b.y_min, b.y_max),
        (b.x_min, b.x_max),
    ))
}
