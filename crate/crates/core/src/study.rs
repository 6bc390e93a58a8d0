//! Study manifest records and artifact loading.
//!
//! A manifest is a JSON Lines file; each line describes one study. Paths are
//! relative to the manifest's directory unless absolute.
//!
//! ```json
//! {"study_id": "s001", "image": "s001/image.png", "report": "s001/report.txt",
//!  "split": "train",
//!  "provider_artifacts": {
//!    "edited_image": "s001/edited.png",
//!    "anatomy_mask_directory": "s001/anatomy",
//!    "detections_file": "s001/detections.json",
//!    "organ_masks": {"right_lung": "s001/organs/right_lung.png",
//!                    "left_lung": "s001/organs/left_lung.png",
//!                    "heart": "s001/organs/heart.png"}},
//!  "qc_flags": []}
//! ```
//!
//! The anatomy directory holds one PNG per label named by
//! [`AnatomicalLabel::file_stem`] plus `heart.png`. An optional
//! `findings_file` under `provider_artifacts` points at externally structured
//! findings; without it the report text goes through the built-in structurer.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::io::{self, FormatError};
use crate::mask::{ImageGray, RasterMask};
use crate::model::{AnatomicalLabel, DetectionBox, Split, StructuredFinding};
use crate::report;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrganMaskPaths {
    pub right_lung: PathBuf,
    pub left_lung: PathBuf,
    pub heart: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProviderArtifacts {
    pub edited_image: PathBuf,
    pub anatomy_mask_directory: PathBuf,
    pub detections_file: PathBuf,
    pub organ_masks: OrganMaskPaths,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub findings_file: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Study {
    pub study_id: String,
    pub image: PathBuf,
    pub report: PathBuf,
    pub split: Split,
    pub provider_artifacts: ProviderArtifacts,
    /// Precomputed image-level QC flags; any flag excludes the study.
    #[serde(default)]
    pub qc_flags: Vec<String>,
}

/// A parsed manifest plus the directory its relative paths resolve against.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Manifest {
    pub root: PathBuf,
    pub studies: Vec<Study>,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self, FormatError> {
        let studies = io::read_jsonl(path)?;
        let root = path
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from("."));
        Ok(Self { root, studies })
    }

    pub fn write(&self, path: &Path) -> Result<(), FormatError> {
        io::write_jsonl(path, &self.studies)
    }
}

/// One problem found while validating a study.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub subject: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.subject, self.message)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrganMasks {
    pub right_lung: RasterMask,
    pub left_lung: RasterMask,
    pub heart: RasterMask,
}

/// Everything the pipeline reads for one study, decoded.
#[derive(Debug, Clone)]
pub struct StudyArtifacts {
    pub image: ImageGray,
    pub edited: ImageGray,
    pub report_text: String,
    pub anatomy: BTreeMap<AnatomicalLabel, RasterMask>,
    /// Heart mask from the anatomy provider, compared against `organs.heart`
    /// during QC.
    pub anatomy_heart: RasterMask,
    pub detections: Vec<DetectionBox>,
    pub organs: OrganMasks,
    pub findings: Option<Vec<StructuredFinding>>,
}

impl StudyArtifacts {
    /// Lungs from the anatomy provider, for cross-checking.
    pub fn secondary_organs(&self) -> OrganMasks {
        OrganMasks {
            right_lung: self.anatomy[&AnatomicalLabel::RightLung].clone(),
            left_lung: self.anatomy[&AnatomicalLabel::LeftLung].clone(),
            heart: self.anatomy_heart.clone(),
        }
    }
}

fn resolve(root: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        root.join(p)
    }
}

struct Collector {
    violations: Vec<Violation>,
}

impl Collector {
    fn push(&mut self, subject: impl fmt::Display, message: impl fmt::Display) {
        self.violations.push(Violation {
            subject: subject.to_string(),
            message: message.to_string(),
        });
    }

    fn take<T>(&mut self, r: Result<T, FormatError>) -> Option<T> {
        match r {
            Ok(v) => Some(v),
            Err(e) => {
                let path = e.path().display().to_string();
                let msg = e.to_string();
                let msg = msg
                    .strip_prefix(&format!("{path}: "))
                    .unwrap_or(&msg)
                    .to_string();
                self.push(path, msg);
                None
            }
        }
    }

    fn same_dims(&mut self, path: &Path, got: (u32, u32), want: (u32, u32)) -> bool {
        if got != want {
            self.push(
                path.display(),
                format!(
                    "dimension mismatch: {}x{} vs image {}x{}",
                    got.0, got.1, want.0, want.1
                ),
            );
            return false;
        }
        true
    }
}

/// Reads and checks every artifact of `study`. Returns all violations found,
/// not just the first.
pub fn load_study(study: &Study, root: &Path) -> Result<StudyArtifacts, Vec<Violation>> {
    let mut c = Collector {
        violations: Vec::new(),
    };
    let pa = &study.provider_artifacts;
    let image_path = resolve(root, &study.image);
    let image = c.take(io::read_image(&image_path));
    let dims = image.as_ref().map(ImageGray::dims);

    let edited_path = resolve(root, &pa.edited_image);
    let edited = c.take(io::read_image(&edited_path));
    if let (Some(d), Some(e)) = (dims, &edited) {
        c.same_dims(&edited_path, e.dims(), d);
    }

    let report_path = resolve(root, &study.report);
    let report_text = c.take(
        std::fs::read_to_string(&report_path).map_err(|e| FormatError::io(&report_path, e)),
    );

    let load_mask = |c: &mut Collector, path: PathBuf, must_be_nonempty: bool| {
        let m = c.take(io::read_mask(&path))?;
        if let Some(d) = dims {
            if !c.same_dims(&path, m.dims(), d) {
                return None;
            }
        }
        if must_be_nonempty && m.is_empty() {
            c.push(path.display(), "mask is empty");
        }
        Some(m)
    };

    let adir = resolve(root, &pa.anatomy_mask_directory);
    let mut anatomy = BTreeMap::new();
    for &label in AnatomicalLabel::ALL {
        let p = adir.join(format!("{}.png", label.file_stem()));
        if let Some(m) = load_mask(&mut c, p, false) {
            anatomy.insert(label, m);
        }
    }
    let anatomy_heart = load_mask(&mut c, adir.join("heart.png"), false);

    let om = &pa.organ_masks;
    let right_lung = load_mask(&mut c, resolve(root, &om.right_lung), true);
    let left_lung = load_mask(&mut c, resolve(root, &om.left_lung), true);
    let heart = load_mask(&mut c, resolve(root, &om.heart), true);

    let det_path = resolve(root, &pa.detections_file);
    let detections = c.take(io::read_detections(&det_path));
    if let (Some(boxes), Some((w, h))) = (&detections, dims) {
        for (i, b) in boxes.iter().enumerate() {
            for v in b.violations(w, h) {
                c.push(format!("{} box {i}", det_path.display()), v);
            }
        }
    }

    let findings = match &pa.findings_file {
        None => Some(None),
        Some(p) => {
            let p = resolve(root, p);
            match report::load_external_findings(&p) {
                Ok(f) => Some(Some(f)),
                Err(e) => {
                    c.push(p.display(), e);
                    None
                }
            }
        }
    };

    if !c.violations.is_empty() {
        return Err(c.violations);
    }
    let organs = OrganMasks {
        right_lung: right_lung.expect("checked"),
        left_lung: left_lung.expect("checked"),
        heart: heart.expect("checked"),
    };
    Ok(StudyArtifacts {
        image: image.expect("checked"),
        edited: edited.expect("checked"),
        report_text: report_text.expect("checked"),
        anatomy,
        anatomy_heart: anatomy_heart.expect("checked"),
        detections: detections.expect("checked"),
        organs,
        findings: findings.expect("checked"),
    })
}

/// All violations for `study`; empty when it can be processed.
pub fn validate_study(study: &Study, root: &Path) -> Vec<Violation> {
    load_study(study, root).err().unwrap_or_default()
}
