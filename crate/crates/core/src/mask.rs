//! Pixel grids: binary [`RasterMask`] sets and grayscale [`ImageGray`] rasters.
//!
//! Masks are coordinate sets over an `height × width` grid. They are stored as
//! a dense bitmap, but equality and every operation follow set semantics, so
//! two masks are equal exactly when they have the same grid and the same
//! members.

use std::fmt;

use thiserror::Error;

/// Grid size as `(width, height)`.
pub type Dims = (u32, u32);

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RasterError {
    #[error("dimension mismatch: {left_w}x{left_h} vs {right_w}x{right_h}")]
    DimensionMismatch {
        left_w: u32,
        left_h: u32,
        right_w: u32,
        right_h: u32,
    },
    #[error("coordinate ({row}, {col}) outside {width}x{height} grid")]
    OutOfBounds {
        row: u32,
        col: u32,
        width: u32,
        height: u32,
    },
    #[error("box [{x_min}, {y_min}, {x_max}, {y_max}] is not inside a {width}x{height} image")]
    BoxOutOfBounds {
        x_min: u32,
        y_min: u32,
        x_max: u32,
        y_max: u32,
        width: u32,
        height: u32,
    },
    #[error("{0} mask is empty")]
    EmptyMask(&'static str),
    #[error("invalid image: {0}")]
    InvalidImage(String),
}

pub(crate) fn check_dims(left: Dims, right: Dims) -> Result<(), RasterError> {
    if left == right {
        Ok(())
    } else {
        Err(RasterError::DimensionMismatch {
            left_w: left.0,
            left_h: left.1,
            right_w: right.0,
            right_h: right.1,
        })
    }
}

/// A binary pixel set over a fixed grid.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct RasterMask {
    width: u32,
    height: u32,
    bits: Vec<bool>,
}

impl RasterMask {
    pub fn new(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            bits: vec![false; width as usize * height as usize],
        }
    }

    /// Every pixel of the grid is a member.
    pub fn full(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            bits: vec![true; width as usize * height as usize],
        }
    }

    /// Builds a mask from `(row, col)` coordinates. Duplicates collapse.
    pub fn from_coords<I>(width: u32, height: u32, coords: I) -> Result<Self, RasterError>
    where
        I: IntoIterator<Item = (u32, u32)>,
    {
        let mut mask = Self::new(width, height);
        for (row, col) in coords {
            mask.try_insert(row, col)?;
        }
        Ok(mask)
    }

    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> bool) -> Self {
        let mut bits = Vec::with_capacity(width as usize * height as usize);
        for row in 0..height {
            for col in 0..width {
                bits.push(f(row, col));
            }
        }
        Self {
            width,
            height,
            bits,
        }
    }

    /// Inclusive rectangle `rows × cols`, clipped to the grid.
    pub fn rect(width: u32, height: u32, rows: (u32, u32), cols: (u32, u32)) -> Self {
        Self::from_fn(width, height, |r, c| {
            r >= rows.0 && r <= rows.1 && c >= cols.0 && c <= cols.1
        })
    }

    pub(crate) fn from_bits(width: u32, height: u32, bits: Vec<bool>) -> Self {
        debug_assert_eq!(bits.len(), width as usize * height as usize);
        Self {
            width,
            height,
            bits,
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn dims(&self) -> Dims {
        (self.width, self.height)
    }

    pub(crate) fn bits(&self) -> &[bool] {
        &self.bits
    }

    #[inline]
    fn index(&self, row: u32, col: u32) -> usize {
        row as usize * self.width as usize + col as usize
    }

    pub fn in_bounds(&self, row: i64, col: i64) -> bool {
        row >= 0 && col >= 0 && row < self.height as i64 && col < self.width as i64
    }

    /// Membership test; coordinates outside the grid are never members.
    #[inline]
    pub fn contains(&self, row: u32, col: u32) -> bool {
        row < self.height && col < self.width && self.bits[self.index(row, col)]
    }

    pub fn try_insert(&mut self, row: u32, col: u32) -> Result<bool, RasterError> {
        if row >= self.height || col >= self.width {
            return Err(RasterError::OutOfBounds {
                row,
                col,
                width: self.width,
                height: self.height,
            });
        }
        let idx = self.index(row, col);
        let was = self.bits[idx];
        self.bits[idx] = true;
        Ok(!was)
    }

    /// Inserts a member. Panics when the coordinate is outside the grid.
    pub fn insert(&mut self, row: u32, col: u32) -> bool {
        self.try_insert(row, col).expect("coordinate inside grid")
    }

    pub fn remove(&mut self, row: u32, col: u32) -> bool {
        if !self.contains(row, col) {
            return false;
        }
        let idx = self.index(row, col);
        self.bits[idx] = false;
        true
    }

    /// Number of member pixels.
    pub fn len(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    /// Members in row-major order.
    pub fn iter(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        let w = self.width as usize;
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(move |(i, _)| ((i / w) as u32, (i % w) as u32))
    }

    /// Topmost-then-leftmost member.
    pub fn first(&self) -> Option<(u32, u32)> {
        self.iter().next()
    }

    pub fn intersection_count(&self, other: &Self) -> Result<usize, RasterError> {
        check_dims(self.dims(), other.dims())?;
        Ok(self
            .bits
            .iter()
            .zip(&other.bits)
            .filter(|(&a, &b)| a && b)
            .count())
    }

    pub fn union_count(&self, other: &Self) -> Result<usize, RasterError> {
        check_dims(self.dims(), other.dims())?;
        Ok(self
            .bits
            .iter()
            .zip(&other.bits)
            .filter(|(&a, &b)| a || b)
            .count())
    }

    pub fn intersects(&self, other: &Self) -> Result<bool, RasterError> {
        check_dims(self.dims(), other.dims())?;
        Ok(self.bits.iter().zip(&other.bits).any(|(&a, &b)| a && b))
    }

    pub fn union(&self, other: &Self) -> Result<Self, RasterError> {
        let mut out = self.clone();
        out.union_with(other)?;
        Ok(out)
    }

    pub fn union_with(&mut self, other: &Self) -> Result<(), RasterError> {
        check_dims(self.dims(), other.dims())?;
        for (a, &b) in self.bits.iter_mut().zip(&other.bits) {
            *a |= b;
        }
        Ok(())
    }

    pub fn intersection(&self, other: &Self) -> Result<Self, RasterError> {
        check_dims(self.dims(), other.dims())?;
        let bits = self
            .bits
            .iter()
            .zip(&other.bits)
            .map(|(&a, &b)| a && b)
            .collect();
        Ok(Self::from_bits(self.width, self.height, bits))
    }

    pub fn difference(&self, other: &Self) -> Result<Self, RasterError> {
        check_dims(self.dims(), other.dims())?;
        let bits = self
            .bits
            .iter()
            .zip(&other.bits)
            .map(|(&a, &b)| a && !b)
            .collect();
        Ok(Self::from_bits(self.width, self.height, bits))
    }

    pub fn is_subset_of(&self, other: &Self) -> Result<bool, RasterError> {
        check_dims(self.dims(), other.dims())?;
        Ok(self.bits.iter().zip(&other.bits).all(|(&a, &b)| !a || b))
    }

    /// `(min_row, min_col, max_row, max_col)` of the members, inclusive.
    pub fn bounding_box(&self) -> Option<(u32, u32, u32, u32)> {
        let mut it = self.iter();
        let (r0, c0) = it.next()?;
        let (mut min_r, mut min_c, mut max_r, mut max_c) = (r0, c0, r0, c0);
        for (r, c) in it {
            min_r = min_r.min(r);
            min_c = min_c.min(c);
            max_r = max_r.max(r);
            max_c = max_c.max(c);
        }
        Some((min_r, min_c, max_r, max_c))
    }

    /// Smallest and largest member column.
    pub fn col_span(&self) -> Option<(u32, u32)> {
        self.bounding_box().map(|(_, c0, _, c1)| (c0, c1))
    }

    /// Smallest and largest member row.
    pub fn row_span(&self) -> Option<(u32, u32)> {
        self.bounding_box().map(|(r0, _, r1, _)| (r0, r1))
    }
}

impl fmt::Debug for RasterMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "RasterMask({}x{}, {} px",
            self.width,
            self.height,
            self.len()
        )?;
        if self.width * self.height <= 64 {
            write!(f, ", {:?}", self.iter().collect::<Vec<_>>())?;
        }
        write!(f, ")")
    }
}

/// Row-major grayscale image with intensities in `[0, 2^bit_depth - 1]`.
#[derive(Clone, PartialEq, Eq)]
pub struct ImageGray {
    width: u32,
    height: u32,
    bit_depth: u8,
    pixels: Vec<u16>,
}

impl ImageGray {
    pub fn new(width: u32, height: u32, bit_depth: u8, pixels: Vec<u16>) -> Result<Self, RasterError> {
        if !(1..=16).contains(&bit_depth) {
            return Err(RasterError::InvalidImage(format!(
                "bit depth {bit_depth} outside 1..=16"
            )));
        }
        if pixels.len() != width as usize * height as usize {
            return Err(RasterError::InvalidImage(format!(
                "{} pixels for a {width}x{height} image",
                pixels.len()
            )));
        }
        let max = max_for_depth(bit_depth);
        if let Some(p) = pixels.iter().find(|&&p| p > max) {
            return Err(RasterError::InvalidImage(format!(
                "intensity {p} exceeds {max} for {bit_depth}-bit image"
            )));
        }
        Ok(Self {
            width,
            height,
            bit_depth,
            pixels,
        })
    }

    /// 8-bit image from a per-pixel function.
    pub fn from_fn_u8(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> u8) -> Self {
        let mut pixels = Vec::with_capacity(width as usize * height as usize);
        for row in 0..height {
            for col in 0..width {
                pixels.push(f(row, col) as u16);
            }
        }
        Self {
            width,
            height,
            bit_depth: 8,
            pixels,
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn dims(&self) -> Dims {
        (self.width, self.height)
    }

    pub fn bit_depth(&self) -> u8 {
        self.bit_depth
    }

    /// `I_max = 2^bit_depth - 1`.
    pub fn max_intensity(&self) -> u16 {
        max_for_depth(self.bit_depth)
    }

    pub fn pixels(&self) -> &[u16] {
        &self.pixels
    }

    #[inline]
    pub fn get(&self, row: u32, col: u32) -> u16 {
        self.pixels[row as usize * self.width as usize + col as usize]
    }
}

impl fmt::Debug for ImageGray {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "ImageGray({}x{}, {}-bit)",
            self.width, self.height, self.bit_depth
        )
    }
}

fn max_for_depth(bit_depth: u8) -> u16 {
    ((1u32 << bit_depth) - 1) as u16
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn set_semantics() {
        let a = RasterMask::from_coords(4, 4, [(0, 0), (0, 0), (3, 3)]).unwrap();
        assert_eq!(a.len(), 2);
        let b = RasterMask::from_coords(4, 4, [(3, 3), (0, 0)]).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn out_of_bounds_rejected() {
        let err = RasterMask::from_coords(4, 4, [(4, 0)]).unwrap_err();
        assert!(matches!(err, RasterError::OutOfBounds { row: 4, .. }));
    }

    #[test]
    fn image_validates_depth_and_length() {
        assert!(ImageGray::new(2, 2, 8, vec![0, 1, 2]).is_err());
        assert!(ImageGray::new(1, 1, 8, vec![256]).is_err());
        let img = ImageGray::new(1, 1, 8, vec![255]).unwrap();
        assert_eq!(img.max_intensity(), 255);
    }

    #[test]
    fn bounding_box_and_spans() {
        let m = RasterMask::from_coords(10, 10, [(2, 3), (7, 1), (4, 8)]).unwrap();
        assert_eq!(m.bounding_box(), Some((2, 1, 7, 8)));
        assert_eq!(m.col_span(), Some((1, 8)));
        assert_eq!(RasterMask::new(3, 3).bounding_box(), None);
    }
}
