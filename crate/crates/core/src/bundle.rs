//! Case bundle file format: one JSON document per study.

use std::path::{Path, PathBuf};

use base64::Engine;
use base64::engine::general_purpose::STANDARD as B64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CoraxError, Result};
use crate::gaze::{BinaryMask, Scanpath};
use crate::grounding::WordAlignment;
use crate::imageio::GrayImage;
use crate::labeler::Report;
use crate::labels::{Abnormality, LabelSet};

#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    Ellipse { cx: f64, cy: f64, rx: f64, ry: f64 },
    Rect { x: f64, y: f64, w: f64, h: f64 },
}

impl Shape {
    /// Inclusion test at a normalized point.
    pub fn contains(&self, x: f64, y: f64) -> bool {
        match *self {
            Shape::Ellipse { cx, cy, rx, ry } => {
                let dx = (x - cx) / rx;
                let dy = (y - cy) / ry;
                dx * dx + dy * dy <= 1.0
            }
            Shape::Rect { x: rx, y: ry, w, h } => x >= rx && x <= rx + w && y >= ry && y <= ry + h,
        }
    }

    fn params(&self) -> Vec<(&'static str, f64)> {
        match *self {
            Shape::Ellipse { cx, cy, rx, ry } => vec![("cx", cx), ("cy", cy), ("rx", rx), ("ry", ry)],
            Shape::Rect { x, y, w, h } => vec![("x", x), ("y", y), ("w", w), ("h", h)],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub abnormality: Abnormality,
    pub shape: Shape,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub labels: LabelSet,
    #[serde(default)]
    pub regions: Vec<Region>,
}

impl GroundTruth {
    /// Union of the label's regions rasterized at pixel centres.
    pub fn region_mask(&self, abn: Abnormality, width: usize, height: usize) -> BinaryMask {
        let shapes: Vec<&Shape> = self
            .regions
            .iter()
            .filter(|r| r.abnormality == abn)
            .map(|r| &r.shape)
            .collect();
        BinaryMask::from_fn(width, height, |x, y| {
            let (xn, yn) = ((x as f64 + 0.5) / width as f64, (y as f64 + 0.5) / height as f64);
            shapes.iter().any(|s| s.contains(xn, yn))
        })
    }
}

/// Bundle as stored on disk. Exactly one of `image_path` (relative to the
/// bundle file) and `image_b64` is present.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaseBundleFile {
    pub case_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_path: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_b64: Option<String>,
    pub scanpath: Scanpath,
    pub report: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transcript: Option<Vec<WordAlignment>>,
    pub ground_truth: GroundTruth,
}

/// A loaded case with its raster decoded.
#[derive(Clone, Debug, PartialEq)]
pub struct CaseBundle {
    pub case_id: String,
    pub image: GrayImage,
    pub scanpath: Scanpath,
    pub report: Report,
    pub transcript: Option<Vec<WordAlignment>>,
    pub ground_truth: GroundTruth,
}

pub fn is_valid_case_id(id: &str) -> bool {
    !id.is_empty()
        && id.len() <= 128
        && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
}

fn check_unit(field: String, v: f64) -> Result<()> {
    if v.is_finite() && (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(CoraxError::validation(field, "must lie in [0, 1]"))
    }
}

impl CaseBundleFile {
    /// Type invariants that do not need the raster.
    pub fn validate(&self) -> Result<()> {
        if !is_valid_case_id(&self.case_id) {
            return Err(CoraxError::validation(
                "case_id",
                "must be 1-128 characters of [A-Za-z0-9_-]",
            ));
        }
        match (&self.image_path, &self.image_b64) {
            (Some(_), Some(_)) | (None, None) => {
                return Err(CoraxError::validation(
                    "image_path",
                    "exactly one of image_path and image_b64 is required",
                ));
            }
            _ => {}
        }
        self.scanpath.validate("scanpath")?;
        if self.report.trim().is_empty() {
            return Err(CoraxError::validation("report", "must not be empty"));
        }
        if let Some(words) = &self.transcript {
            for (i, w) in words.iter().enumerate() {
                if w.t_end_ms < w.t_start_ms
                    || (i > 0 && words[i - 1].t_start_ms > w.t_start_ms)
                {
                    return Err(CoraxError::validation(
                        format!("transcript[{i}].t_start_ms"),
                        "word intervals must be ordered",
                    ));
                }
            }
        }
        for (i, r) in self.ground_truth.regions.iter().enumerate() {
            if !self.ground_truth.labels.contains(r.abnormality) {
                return Err(CoraxError::validation(
                    format!("ground_truth.regions[{i}].abnormality"),
                    "region references a label absent from ground_truth.labels",
                ));
            }
            for (name, v) in r.shape.params() {
                check_unit(format!("ground_truth.regions[{i}].shape.{name}"), v)?;
            }
        }
        Ok(())
    }

    /// Validates and decodes the raster. `base_dir` resolves `image_path`.
    pub fn resolve(&self, base_dir: Option<&Path>) -> Result<CaseBundle> {
        self.validate()?;
        let image = match (&self.image_path, &self.image_b64) {
            (Some(p), _) => {
                let path = base_dir.map(|d| d.join(p)).unwrap_or_else(|| PathBuf::from(p));
                GrayImage::load(&path).map_err(|e| CoraxError::validation("image_path", e.to_string()))?
            }
            (_, Some(b64)) => {
                let bytes = B64
                    .decode(b64.trim())
                    .map_err(|e| CoraxError::validation("image_b64", e.to_string()))?;
                GrayImage::decode(&bytes).map_err(|e| CoraxError::validation("image_b64", e.to_string()))?
            }
            (None, None) => unreachable!("checked by validate"),
        };
        if image.width < 8 || image.height < 8 {
            return Err(CoraxError::validation("image", "raster must be at least 8x8"));
        }
        let mut scanpath = self.scanpath.clone();
        scanpath.case_id = self.case_id.clone();
        Ok(CaseBundle {
            case_id: self.case_id.clone(),
            image,
            scanpath,
            report: Report::new(self.case_id.clone(), self.report.clone()),
            transcript: self.transcript.clone(),
            ground_truth: self.ground_truth.clone(),
        })
    }
}

impl CaseBundle {
    pub fn load(path: &Path) -> Result<Self> {
        let file: CaseBundleFile = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        file.resolve(path.parent())
    }

    /// Self-contained form with the raster embedded as base64 PNG.
    pub fn to_embedded_file(&self) -> Result<CaseBundleFile> {
        Ok(CaseBundleFile {
            case_id: self.case_id.clone(),
            image_path: None,
            image_b64: Some(B64.encode(self.image.encode_png()?)),
            scanpath: Scanpath {
                case_id: String::new(),
                ..self.scanpath.clone()
            },
            report: self.report.text.clone(),
            transcript: self.transcript.clone(),
            ground_truth: self.ground_truth.clone(),
        })
    }

    /// SHA-256 over the embedded JSON form.
    pub fn content_hash(&self) -> Result<String> {
        let json = serde_json::to_vec(&self.to_embedded_file()?)?;
        Ok(hex(&Sha256::digest(&json)))
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.image.width, self.image.height)
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Loads every `*.json` bundle in a directory, sorted by file name.
pub fn load_dir(dir: &Path) -> Result<Vec<CaseBundle>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .collect();
    paths.sort();
    paths.iter().map(|p| CaseBundle::load(p)).collect()
}
