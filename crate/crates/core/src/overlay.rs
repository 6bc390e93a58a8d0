//! Mask overlays for visual inspection.

use std::path::Path;

use image::{Rgb, RgbImage};

use crate::io::{self, gray_to_rgb};
use crate::mask::{check_dims, ImageGray, RasterError, RasterMask};

/// Opacity of the tint over member pixels.
pub const OVERLAY_ALPHA: f64 = 0.4;
pub const OVERLAY_COLOR: [u8; 3] = [255, 0, 0];

/// The image in RGB with every mask pixel blended toward red.
pub fn render_overlay(image: &ImageGray, mask: &RasterMask) -> Result<RgbImage, RasterError> {
    check_dims(image.dims(), mask.dims())?;
    let mut out = gray_to_rgb(image);
    for (r, c) in mask.iter() {
        let px = out.get_pixel(c, r).0;
        let blend = |v: u8, t: u8| ((1.0 - OVERLAY_ALPHA) * v as f64 + OVERLAY_ALPHA * t as f64).round() as u8;
        out.put_pixel(
            c,
            r,
            Rgb([
                blend(px[0], OVERLAY_COLOR[0]),
                blend(px[1], OVERLAY_COLOR[1]),
                blend(px[2], OVERLAY_COLOR[2]),
            ]),
        );
    }
    Ok(out)
}

/// PNG bytes of [`render_overlay`].
pub fn overlay_png(image: &ImageGray, mask: &RasterMask) -> Result<Vec<u8>, RasterError> {
    Ok(io::encode_rgb_png(&render_overlay(image, mask)?))
}

#[derive(Debug, thiserror::Error)]
pub enum OverlayError {
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error(transparent)]
    Format(#[from] io::FormatError),
}

pub fn write_overlay(image: &ImageGray, mask: &RasterMask, out_path: &Path) -> Result<(), OverlayError> {
    let img = render_overlay(image, mask)?;
    io::write_rgb_png(out_path, &img)?;
    Ok(())
}
