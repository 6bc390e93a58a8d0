//! Building blocks for turning chest X-ray study artifacts into an
//! instruction-guided lesion-segmentation dataset.

pub mod config;
pub mod eval;
pub mod grounding;
pub mod io;
pub mod mask;
pub mod model;
pub mod overlay;
pub mod pairgen;
pub mod pipeline;
pub mod qc;
pub mod raster;
pub mod report;
pub mod study;
pub mod synth;
pub mod templates;

pub use config::{Config, ThresholdSet};
pub use mask::{ImageGray, RasterError, RasterMask};
