//! Pipeline settings: command-line flag, then environment, then config file.

use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use corax_core::gaze::DEFAULT_THRESHOLD_FRAC;
use corax_core::grounding::{DEFAULT_STRIDE_MS, DEFAULT_TRANSCRIPT_PAD_MS, DEFAULT_WINDOW_MS, PriorAtlas};
use corax_core::oracle::{DEFAULT_DWELL_THRESHOLD, OracleBackend};
use corax_core::referral::{GrounderConfig, Pipeline, RoiMode};
use serde::Deserialize;

use crate::error::CliError;

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendArg {
    Gt,
    Prior,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GrounderArg {
    Dwell,
    Transcript,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RoiArg {
    Mean,
    Static,
}

impl From<RoiArg> for RoiMode {
    fn from(r: RoiArg) -> Self {
        match r {
            RoiArg::Mean => RoiMode::Mean,
            RoiArg::Static => RoiMode::Static,
        }
    }
}

/// Contents of a TOML config file. Every key is optional.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub backend: Option<BackendArg>,
    pub grounder: Option<GrounderArg>,
    pub roi: Option<RoiArg>,
    pub threshold_frac: Option<f64>,
    pub window_ms: Option<u64>,
    pub stride_ms: Option<u64>,
    pub pad_ms: Option<u64>,
    pub sigma_px: Option<f64>,
    pub prior_threshold: Option<f64>,
    pub atlas: Option<PathBuf>,
    pub threads: Option<usize>,
    pub data_dir: Option<PathBuf>,
    pub port: Option<u16>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(FileConfig::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        toml::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
    }
}

#[derive(Clone, Debug, Default, Args)]
pub struct PipelineArgs {
    /// Abnormality oracle
    #[arg(long, env = "CORAX_BACKEND", value_enum)]
    pub backend: Option<BackendArg>,
    /// Temporal grounder
    #[arg(long, env = "CORAX_GROUNDER", value_enum)]
    pub grounder: Option<GrounderArg>,
    /// Region-of-interest construction
    #[arg(long, env = "CORAX_ROI", value_enum)]
    pub roi: Option<RoiArg>,
    /// ROI binarization threshold as a fraction of the maximum
    #[arg(long, env = "CORAX_THRESHOLD_FRAC")]
    pub threshold_frac: Option<f64>,
    #[arg(long, env = "CORAX_WINDOW_MS")]
    pub window_ms: Option<u64>,
    #[arg(long, env = "CORAX_STRIDE_MS")]
    pub stride_ms: Option<u64>,
    #[arg(long, env = "CORAX_PAD_MS")]
    pub pad_ms: Option<u64>,
    /// Gaussian kernel width in pixels (default: image width / 32)
    #[arg(long, env = "CORAX_SIGMA_PX")]
    pub sigma_px: Option<f64>,
    /// Dwell fraction at which the prior backend reports a label
    #[arg(long, env = "CORAX_PRIOR_THRESHOLD")]
    pub prior_threshold: Option<f64>,
    /// Directory holding an atlas written by `corax atlas`
    #[arg(long, env = "CORAX_ATLAS")]
    pub atlas: Option<PathBuf>,
}

#[derive(Clone, Debug)]
pub struct Settings {
    pub pipeline: Pipeline,
    pub threshold_frac: f64,
}

impl PipelineArgs {
    pub fn resolve(&self, file: &FileConfig) -> Result<Settings, CliError> {
        let backend = self.backend.or(file.backend).unwrap_or(BackendArg::Gt);
        let grounder = self.grounder.or(file.grounder).unwrap_or(GrounderArg::Transcript);
        let roi = self.roi.or(file.roi).unwrap_or(RoiArg::Mean);
        let threshold_frac = self.threshold_frac.or(file.threshold_frac).unwrap_or(DEFAULT_THRESHOLD_FRAC);
        if !(threshold_frac > 0.0 && threshold_frac < 1.0) {
            return Err(CliError::Usage(format!("threshold-frac must lie in (0, 1), got {threshold_frac}")));
        }
        let prior_threshold = self.prior_threshold.or(file.prior_threshold).unwrap_or(DEFAULT_DWELL_THRESHOLD);
        if !(0.0..=1.0).contains(&prior_threshold) {
            return Err(CliError::Usage(format!("prior-threshold must lie in [0, 1], got {prior_threshold}")));
        }
        let sigma_px = self.sigma_px.or(file.sigma_px);
        if sigma_px.is_some_and(|s| s.is_nan() || s <= 0.0) {
            return Err(CliError::Usage("sigma-px must be positive".into()));
        }
        let grounder = match grounder {
            GrounderArg::Dwell => GrounderConfig::Dwell {
                window_ms: self.window_ms.or(file.window_ms).unwrap_or(DEFAULT_WINDOW_MS),
                stride_ms: self.stride_ms.or(file.stride_ms).unwrap_or(DEFAULT_STRIDE_MS),
            },
            GrounderArg::Transcript => GrounderConfig::Transcript {
                pad_ms: self.pad_ms.or(file.pad_ms).unwrap_or(DEFAULT_TRANSCRIPT_PAD_MS),
            },
        };
        if let GrounderConfig::Dwell { window_ms, stride_ms } = grounder {
            if window_ms == 0 || stride_ms == 0 {
                return Err(CliError::Usage("window-ms and stride-ms must be positive".into()));
            }
        }
        let atlas = match self.atlas.as_ref().or(file.atlas.as_ref()) {
            Some(dir) => PriorAtlas::load_dir(dir)?,
            None => PriorAtlas::default(),
        };
        let oracle = match backend {
            BackendArg::Gt => OracleBackend::GroundTruth,
            BackendArg::Prior => OracleBackend::PriorDwell {
                threshold: prior_threshold,
                thresholds: Default::default(),
            },
        };
        Ok(Settings {
            pipeline: Pipeline {
                atlas,
                oracle,
                grounder,
                roi_mode: roi.into(),
                sigma_px,
                ..Pipeline::default()
            },
            threshold_frac,
        })
    }
}
