//! On-disk formats: 8-bit grayscale PNG images and masks, detection JSON,
//! JSON Lines helpers and atomic writes.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use image::{GrayImage, ImageBuffer, RgbImage};
use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

use crate::mask::{ImageGray, RasterMask};
use crate::model::DetectionBox;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Image { path: PathBuf, message: String },
    #[error("{path}: {message}")]
    Json { path: PathBuf, message: String },
}

impl FormatError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn json(path: &Path, message: impl ToString) -> Self {
        Self::Json {
            path: path.to_path_buf(),
            message: message.to_string(),
        }
    }

    pub fn path(&self) -> &Path {
        match self {
            Self::Io { path, .. } | Self::Image { path, .. } | Self::Json { path, .. } => path,
        }
    }
}

fn image_err(path: &Path, e: impl ToString) -> FormatError {
    FormatError::Image {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

/// Reads a PNG as an 8-bit grayscale image. Colour inputs are converted to luma.
pub fn read_image(path: &Path) -> Result<ImageGray, FormatError> {
    let dynimg = image::open(path).map_err(|e| image_err(path, e))?;
    let gray = dynimg.into_luma8();
    let (w, h) = gray.dimensions();
    let pixels = gray.into_raw().into_iter().map(u16::from).collect();
    ImageGray::new(w, h, 8, pixels).map_err(|e| image_err(path, e))
}

pub fn write_image(path: &Path, img: &ImageGray) -> Result<(), FormatError> {
    if img.bit_depth() != 8 {
        return Err(image_err(path, "only 8-bit images can be written"));
    }
    let raw: Vec<u8> = img.pixels().iter().map(|&p| p as u8).collect();
    let buf: GrayImage = ImageBuffer::from_raw(img.width(), img.height(), raw)
        .ok_or_else(|| image_err(path, "buffer size mismatch"))?;
    write_gray_png(path, &buf)
}

/// Reads a mask PNG: every nonzero pixel is a member.
pub fn read_mask(path: &Path) -> Result<RasterMask, FormatError> {
    let dynimg = image::open(path).map_err(|e| image_err(path, e))?;
    let gray = dynimg.into_luma8();
    let (w, h) = gray.dimensions();
    let bits = gray.into_raw().into_iter().map(|p| p != 0).collect();
    Ok(RasterMask::from_bits(w, h, bits))
}

pub fn write_mask(path: &Path, mask: &RasterMask) -> Result<(), FormatError> {
    let raw: Vec<u8> = mask.bits().iter().map(|&b| if b { 255 } else { 0 }).collect();
    let buf: GrayImage = ImageBuffer::from_raw(mask.width(), mask.height(), raw)
        .ok_or_else(|| image_err(path, "buffer size mismatch"))?;
    write_gray_png(path, &buf)
}

fn write_gray_png(path: &Path, buf: &GrayImage) -> Result<(), FormatError> {
    let mut out = std::io::Cursor::new(Vec::new());
    buf.write_to(&mut out, image::ImageFormat::Png)
        .map_err(|e| image_err(path, e))?;
    write_atomic(path, &out.into_inner())
}

pub fn encode_rgb_png(img: &RgbImage) -> Vec<u8> {
    let mut out = std::io::Cursor::new(Vec::new());
    img.write_to(&mut out, image::ImageFormat::Png)
        .expect("in-memory PNG encoding");
    out.into_inner()
}

pub fn write_rgb_png(path: &Path, img: &RgbImage) -> Result<(), FormatError> {
    write_atomic(path, &encode_rgb_png(img))
}

pub(crate) fn gray_to_rgb(img: &ImageGray) -> RgbImage {
    let shift = img.bit_depth().saturating_sub(8);
    RgbImage::from_fn(img.width(), img.height(), |x, y| {
        let v = (img.get(y, x) >> shift) as u8;
        image::Rgb([v, v, v])
    })
}

/// Reads a JSON array of `{label, confidence, bbox}` objects.
pub fn read_detections(path: &Path) -> Result<Vec<DetectionBox>, FormatError> {
    read_json(path)
}

pub fn write_detections(path: &Path, boxes: &[DetectionBox]) -> Result<(), FormatError> {
    write_json(path, &boxes)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, FormatError> {
    let text = fs::read_to_string(path).map_err(|e| FormatError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| FormatError::json(path, e))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), FormatError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| FormatError::json(path, e))?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

/// Parses JSON Lines, skipping blank lines. Errors carry the 1-based line.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, FormatError> {
    let file = fs::File::open(path).map_err(|e| FormatError::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| FormatError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let value = serde_json::from_str(&line)
            .map_err(|e| FormatError::json(path, format!("line {}: {e}", i + 1)))?;
        out.push(value);
    }
    Ok(out)
}

pub fn to_jsonl<T: Serialize>(records: &[T]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("serializable record"));
        out.push('\n');
    }
    out
}

pub fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<(), FormatError> {
    write_atomic(path, to_jsonl(records).as_bytes())
}

fn ensure_parent(path: &Path) -> Result<(), FormatError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| FormatError::io(parent, e))?;
        }
    }
    Ok(())
}

/// Writes through a sibling temp file and renames, so readers never observe
/// a half-written file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), FormatError> {
    ensure_parent(path)?;
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    {
        let mut f = fs::File::create(&tmp).map_err(|e| FormatError::io(&tmp, e))?;
        f.write_all(bytes).map_err(|e| FormatError::io(&tmp, e))?;
    }
    fs::rename(&tmp, path).map_err(|e| FormatError::io(path, e))
}
