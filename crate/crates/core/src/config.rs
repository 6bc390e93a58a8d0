//! Pipeline configuration: grounding thresholds, refinement parameters, QC
//! tolerances and negative-sampling settings, loadable from TOML.
//!
//! ```toml
//! [thresholds.general]
//! tau_ano = 0.10
//!
//! [thresholds.edema]
//! tau_conf = 0.01
//!
//! [thresholds.effusion]   # any lesion name may carry its own override
//! tau_signal = 0.3
//!
//! [refine]
//! delta = 12
//!
//! [qc]
//! rel_tol = 0.05
//!
//! [negatives]
//! seed = 7
//! ```
//!
//! Every field is optional; omitted fields keep their defaults. A lesion
//! section only overrides the fields it names, on top of the column that
//! lesion would otherwise use.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::io::FormatError;
use crate::model::LesionType;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
    #[error("{field} = {value} is outside [{lo}, {hi}]")]
    OutOfRange {
        field: String,
        value: f64,
        lo: f64,
        hi: f64,
    },
    #[error("[thresholds.{0}] is not a lesion type")]
    UnknownSection(String),
}

/// The five grounding thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSet {
    pub tau_ano: f64,
    pub tau_anatomy: f64,
    pub tau_conf: f64,
    pub tau_signal: f64,
    pub tau_size: f64,
}

impl ThresholdSet {
    /// Column used for every lesion other than edema.
    pub const GENERAL: ThresholdSet = ThresholdSet {
        tau_ano: 0.10,
        tau_anatomy: 0.25,
        tau_conf: 0.20,
        tau_signal: 0.20,
        tau_size: 0.10,
    };

    pub const EDEMA: ThresholdSet = ThresholdSet {
        tau_ano: 0.01,
        tau_anatomy: 0.25,
        tau_conf: 0.01,
        tau_signal: 0.20,
        tau_size: 0.10,
    };

    pub fn fields(&self) -> [(&'static str, f64); 5] {
        [
            ("tau_ano", self.tau_ano),
            ("tau_anatomy", self.tau_anatomy),
            ("tau_conf", self.tau_conf),
            ("tau_signal", self.tau_signal),
            ("tau_size", self.tau_size),
        ]
    }

    pub fn validate(&self, section: &str) -> Result<(), ConfigError> {
        for (name, v) in self.fields() {
            in_range(&format!("thresholds.{section}.{name}"), v, 0.0, 1.0)?;
        }
        Ok(())
    }

    fn patched(mut self, p: &ThresholdPatch) -> Self {
        if let Some(v) = p.tau_ano {
            self.tau_ano = v;
        }
        if let Some(v) = p.tau_anatomy {
            self.tau_anatomy = v;
        }
        if let Some(v) = p.tau_conf {
            self.tau_conf = v;
        }
        if let Some(v) = p.tau_signal {
            self.tau_signal = v;
        }
        if let Some(v) = p.tau_size {
            self.tau_size = v;
        }
        self
    }
}

fn in_range(field: &str, value: f64, lo: f64, hi: f64) -> Result<(), ConfigError> {
    if value.is_nan() || value < lo || value > hi {
        return Err(ConfigError::OutOfRange {
            field: field.to_string(),
            value,
            lo,
            hi,
        });
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThresholdPatch {
    pub tau_ano: Option<f64>,
    pub tau_anatomy: Option<f64>,
    pub tau_conf: Option<f64>,
    pub tau_signal: Option<f64>,
    pub tau_size: Option<f64>,
}

/// Threshold table: the general and edema columns plus per-lesion patches.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Thresholds {
    pub general: ThresholdSet,
    pub edema: ThresholdSet,
    pub overrides: BTreeMap<LesionType, ThresholdPatch>,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            general: ThresholdSet::GENERAL,
            edema: ThresholdSet::EDEMA,
            overrides: BTreeMap::new(),
        }
    }
}

impl Thresholds {
    pub fn for_lesion(&self, lesion: LesionType) -> ThresholdSet {
        let base = if lesion == LesionType::Edema {
            self.edema
        } else {
            self.general
        };
        match self.overrides.get(&lesion) {
            Some(p) => base.patched(p),
            None => base,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RefineConfig {
    /// Erosions (then as many dilations) used to strip speckle noise.
    pub noise_iterations: u32,
    /// Components smaller than this fraction of their lung are dropped.
    pub min_area_fraction: f64,
    /// Intensity tolerance for region growing, in 8-bit units.
    pub delta: f64,
    pub max_rounds: u32,
    /// Share of a lung's row span filled in for effusions.
    pub base_fraction: f64,
    /// An effusion counts as touching the base when it reaches this lowest
    /// share of the lung's rows.
    pub base_zone_fraction: f64,
}

impl Default for RefineConfig {
    fn default() -> Self {
        Self {
            noise_iterations: 2,
            min_area_fraction: 0.001,
            delta: 10.0,
            max_rounds: 8,
            base_fraction: 0.15,
            base_zone_fraction: 0.25,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QcConfig {
    pub rel_tol: f64,
    /// Cardiomegaly negatives require a CTR at or below this value.
    pub ctr_max: f64,
}

impl Default for QcConfig {
    fn default() -> Self {
        Self {
            rel_tol: 0.05,
            ctr_max: 0.45,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NegativesConfig {
    pub seed: u64,
    /// Probability that an absent-lesion negative uses the global template.
    pub global_probability: f64,
    /// Probability that an opacity basic negative is phrased with the
    /// lesion-inference template instead.
    pub inference_probability: f64,
}

impl Default for NegativesConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            global_probability: 0.5,
            inference_probability: 0.5,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Config {
    pub thresholds: Thresholds,
    pub refine: RefineConfig,
    pub qc: QcConfig,
    pub negatives: NegativesConfig,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    #[serde(default)]
    thresholds: BTreeMap<String, ThresholdPatch>,
    #[serde(default)]
    refine: Option<RefineConfig>,
    #[serde(default)]
    qc: Option<QcConfig>,
    #[serde(default)]
    negatives: Option<NegativesConfig>,
}

impl Config {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let file: ConfigFile = toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: "<config>".into(),
            message: e.to_string(),
        })?;
        let mut cfg = Config::default();
        for (section, patch) in &file.thresholds {
            match section.as_str() {
                "general" => cfg.thresholds.general = cfg.thresholds.general.patched(patch),
                "edema" => cfg.thresholds.edema = cfg.thresholds.edema.patched(patch),
                other => {
                    let lesion = other
                        .replace('_', " ")
                        .parse::<LesionType>()
                        .map_err(|_| ConfigError::UnknownSection(other.to_string()))?;
                    cfg.thresholds.overrides.insert(lesion, *patch);
                }
            }
        }
        cfg.refine = file.refine.unwrap_or_default();
        cfg.qc = file.qc.unwrap_or_default();
        cfg.negatives = file.negatives.unwrap_or_default();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|e| FormatError::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            ConfigError::Parse { message, .. } => ConfigError::Parse {
                path: path.display().to_string(),
                message,
            },
            other => other,
        })
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.thresholds.general.validate("general")?;
        self.thresholds.edema.validate("edema")?;
        for lesion in LesionType::ALL {
            self.thresholds
                .for_lesion(*lesion)
                .validate(lesion.as_str())?;
        }
        let r = &self.refine;
        in_range("refine.min_area_fraction", r.min_area_fraction, 0.0, 1.0)?;
        in_range("refine.delta", r.delta, 0.0, f64::MAX)?;
        in_range("refine.base_fraction", r.base_fraction, 0.0, 1.0)?;
        in_range("refine.base_zone_fraction", r.base_zone_fraction, 0.0, 1.0)?;
        in_range("qc.rel_tol", self.qc.rel_tol, 0.0, 1.0)?;
        in_range("qc.ctr_max", self.qc.ctr_max, 0.0, f64::MAX)?;
        in_range(
            "negatives.global_probability",
            self.negatives.global_probability,
            0.0,
            1.0,
        )?;
        in_range(
            "negatives.inference_probability",
            self.negatives.inference_probability,
            0.0,
            1.0,
        )
    }

    /// Checks that the built-in defaults match the reference calibration.
    /// Returns one message per mismatching value.
    pub fn self_test() -> Vec<String> {
        let expected = [
            ("general", [0.10, 0.25, 0.20, 0.20, 0.10]),
            ("edema", [0.01, 0.25, 0.01, 0.20, 0.10]),
        ];
        let d = Config::default();
        let mut out = Vec::new();
        for (section, values) in expected {
            let set = if section == "edema" {
                d.thresholds.edema
            } else {
                d.thresholds.general
            };
            for ((name, got), want) in set.fields().into_iter().zip(values) {
                if got != want {
                    out.push(format!("thresholds.{section}.{name}: {got} != {want}"));
                }
            }
        }
        for lesion in LesionType::ALL {
            let want = if *lesion == LesionType::Edema {
                ThresholdSet::EDEMA
            } else {
                ThresholdSet::GENERAL
            };
            if d.thresholds.for_lesion(*lesion) != want {
                out.push(format!("{lesion} does not resolve to its default column"));
            }
        }
        if d.qc.ctr_max != 0.45 {
            out.push(format!("qc.ctr_max: {} != 0.45", d.qc.ctr_max));
        }
        out
    }

    /// Stable digest of every setting that influences pipeline output.
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex::encode(&Sha256::digest(json.as_bytes())[..8])
    }
}
