//! Fixations, scanpaths and fixation heatmaps.
//!
//! A fixation renders to a truncated isotropic Gaussian whose amplitude is
//! its duration in milliseconds. The raw ("accumulation") grid keeps that
//! scale; the frame handed to consumers is divided by its own maximum.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CoraxError, Result};

/// Gaussian support radius in units of sigma.
pub const SUPPORT_SIGMAS: f64 = 3.0;
/// Default binarization threshold as a fraction of the frame maximum.
pub const DEFAULT_THRESHOLD_FRAC: f64 = 0.25;

#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fixation {
    pub start_ms: u64,
    pub end_ms: u64,
    pub x_norm: f64,
    pub y_norm: f64,
}

impl Fixation {
    pub fn duration_ms(&self) -> u64 {
        self.end_ms.saturating_sub(self.start_ms)
    }

    /// Open-interval overlap with `[t_start, t_end]`; touching endpoints do
    /// not count.
    pub fn intersects(&self, t_start: u64, t_end: u64) -> bool {
        self.start_ms < t_end && t_start < self.end_ms
    }

    pub fn overlap_ms(&self, t_start: u64, t_end: u64) -> u64 {
        self.end_ms.min(t_end).saturating_sub(self.start_ms.max(t_start))
    }

    /// Nearest pixel of the fixation centre.
    pub fn pixel(&self, width: usize, height: usize) -> (usize, usize) {
        let px = (self.x_norm * width as f64).round() as usize;
        let py = (self.y_norm * height as f64).round() as usize;
        (px.min(width - 1), py.min(height - 1))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scanpath {
    #[serde(default)]
    pub case_id: String,
    pub fixations: Vec<Fixation>,
    pub total_duration_ms: u64,
}

impl Scanpath {
    pub fn new(
        case_id: impl Into<String>,
        fixations: Vec<Fixation>,
        total_duration_ms: u64,
    ) -> Result<Self> {
        let scan = Scanpath {
            case_id: case_id.into(),
            fixations,
            total_duration_ms,
        };
        scan.validate("scanpath")?;
        Ok(scan)
    }

    /// Checks the type invariants, reporting the offending field path
    /// relative to `prefix`.
    pub fn validate(&self, prefix: &str) -> Result<()> {
        for (i, f) in self.fixations.iter().enumerate() {
            let at = |field: &str| format!("{prefix}.fixations[{i}].{field}");
            if !(0.0..=1.0).contains(&f.x_norm) || !f.x_norm.is_finite() {
                return Err(CoraxError::validation(at("x_norm"), "must lie in [0, 1]"));
            }
            if !(0.0..=1.0).contains(&f.y_norm) || !f.y_norm.is_finite() {
                return Err(CoraxError::validation(at("y_norm"), "must lie in [0, 1]"));
            }
            if f.end_ms <= f.start_ms {
                return Err(CoraxError::validation(at("end_ms"), "must exceed start_ms"));
            }
            if i > 0 && self.fixations[i - 1].end_ms > f.start_ms {
                return Err(CoraxError::validation(
                    at("start_ms"),
                    "fixations must be sorted and non-overlapping",
                ));
            }
        }
        if let Some(last) = self.fixations.last() {
            if self.total_duration_ms < last.end_ms {
                return Err(CoraxError::validation(
                    format!("{prefix}.total_duration_ms"),
                    "must cover the last fixation",
                ));
            }
        }
        Ok(())
    }

    pub fn intersecting(&self, t_start: u64, t_end: u64) -> impl Iterator<Item = &Fixation> {
        self.fixations
            .iter()
            .filter(move |f| f.intersects(t_start, t_end))
    }
}

/// Dense row-major intensity grid.
#[derive(Clone, Debug, PartialEq)]
pub struct HeatmapFrame {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
}

impl HeatmapFrame {
    pub fn zeros(width: usize, height: usize) -> Self {
        HeatmapFrame {
            width,
            height,
            values: vec![0.0; width * height],
        }
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    /// Pixel of the largest value; the first in row-major order on ties.
    pub fn argmax(&self) -> (usize, usize) {
        let mut best = 0;
        for (i, v) in self.values.iter().enumerate() {
            if *v > self.values[best] {
                best = i;
            }
        }
        (best % self.width, best / self.width)
    }

    /// Divides by the frame maximum; all-zero frames are returned as is.
    pub fn normalized(mut self) -> Self {
        let max = self.max();
        if max > 0.0 {
            self.values.iter_mut().for_each(|v| *v /= max);
        }
        self
    }

    fn add_assign(&mut self, other: &HeatmapFrame) {
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += b;
        }
    }

    /// 8-bit grayscale, `round(255 * clamp(v, 0, 1))`.
    pub fn to_gray8(&self) -> Vec<u8> {
        self.values
            .iter()
            .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BinaryMask {
    pub width: usize,
    pub height: usize,
    pub data: Vec<bool>,
}

impl BinaryMask {
    pub fn empty(width: usize, height: usize) -> Self {
        BinaryMask {
            width,
            height,
            data: vec![false; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        let data = (0..height)
            .flat_map(|y| (0..width).map(move |x| (x, y)))
            .map(|(x, y)| f(x, y))
            .collect();
        BinaryMask {
            width,
            height,
            data,
        }
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x]
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|b| **b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.data.iter().any(|b| *b)
    }

    /// Value at a normalized image location, nearest-pixel lookup.
    pub fn at_norm(&self, x_norm: f64, y_norm: f64) -> bool {
        let x = ((x_norm * self.width as f64) as usize).min(self.width - 1);
        let y = ((y_norm * self.height as f64) as usize).min(self.height - 1);
        self.get(x, y)
    }

    pub fn union(&self, other: &BinaryMask) -> BinaryMask {
        BinaryMask {
            width: self.width,
            height: self.height,
            data: self.data.iter().zip(&other.data).map(|(a, b)| *a || *b).collect(),
        }
    }

    /// `{0, 255}` bytes.
    pub fn to_gray8(&self) -> Vec<u8> {
        self.data.iter().map(|b| if *b { 255 } else { 0 }).collect()
    }
}

/// One frame per fixation.
#[derive(Clone, Debug, PartialEq)]
pub struct GazeVideo {
    pub frames: Vec<HeatmapFrame>,
    pub frame_times: Vec<(u64, u64)>,
}

/// Default kernel width: 1/32 of the image width.
pub fn default_sigma(width: usize) -> f64 {
    width as f64 / 32.0
}

fn check_dims(width: usize, height: usize, sigma_px: f64) -> Result<()> {
    if width < 8 || height < 8 {
        return Err(CoraxError::Parameter(format!(
            "frame must be at least 8x8, got {width}x{height}"
        )));
    }
    if !(sigma_px.is_finite() && sigma_px > 0.0) {
        return Err(CoraxError::Parameter(format!("sigma must be positive, got {sigma_px}")));
    }
    Ok(())
}

fn splat(grid: &mut HeatmapFrame, fix: &Fixation, sigma_px: f64) {
    let cx = fix.x_norm * grid.width as f64;
    let cy = fix.y_norm * grid.height as f64;
    let radius = SUPPORT_SIGMAS * sigma_px;
    let r2 = radius * radius;
    let amp = fix.duration_ms() as f64;
    let denom = 2.0 * sigma_px * sigma_px;
    let x0 = (cx - radius).floor().max(0.0) as usize;
    let y0 = (cy - radius).floor().max(0.0) as usize;
    let x1 = ((cx + radius).ceil() as usize).min(grid.width - 1);
    let y1 = ((cy + radius).ceil() as usize).min(grid.height - 1);
    for y in y0..=y1 {
        let dy = y as f64 - cy;
        for x in x0..=x1 {
            let dx = x as f64 - cx;
            let d2 = dx * dx + dy * dy;
            if d2 <= r2 {
                grid.values[y * grid.width + x] += amp * (-d2 / denom).exp();
            }
        }
    }
}

/// Raw duration-weighted Gaussian for one fixation, before normalization.
pub fn fixation_accumulation(
    fix: &Fixation,
    width: usize,
    height: usize,
    sigma_px: f64,
) -> Result<HeatmapFrame> {
    check_dims(width, height, sigma_px)?;
    let mut grid = HeatmapFrame::zeros(width, height);
    splat(&mut grid, fix, sigma_px);
    Ok(grid)
}

pub fn render_fixation_frame(
    fix: &Fixation,
    width: usize,
    height: usize,
    sigma_px: f64,
) -> Result<HeatmapFrame> {
    Ok(fixation_accumulation(fix, width, height, sigma_px)?.normalized())
}

pub fn build_gaze_video(
    scan: &Scanpath,
    width: usize,
    height: usize,
    sigma_px: f64,
) -> Result<GazeVideo> {
    if scan.fixations.is_empty() {
        return Err(CoraxError::EmptyInput(format!(
            "scanpath for case {} has no fixations",
            scan.case_id
        )));
    }
    check_dims(width, height, sigma_px)?;
    let frames = scan
        .fixations
        .par_iter()
        .map(|f| render_fixation_frame(f, width, height, sigma_px))
        .collect::<Result<Vec<_>>>()?;
    Ok(GazeVideo {
        frames,
        frame_times: scan.fixations.iter().map(|f| (f.start_ms, f.end_ms)).collect(),
    })
}

fn check_interval(t_start_ms: u64, t_end_ms: u64) -> Result<()> {
    if t_start_ms >= t_end_ms {
        return Err(CoraxError::Parameter(format!(
            "interval [{t_start_ms}, {t_end_ms}] is empty"
        )));
    }
    Ok(())
}

/// Pixelwise mean of the frames whose fixation interval intersects
/// `[t_start_ms, t_end_ms]`.
pub fn roi_mean_image(video: &GazeVideo, t_start_ms: u64, t_end_ms: u64) -> Result<HeatmapFrame> {
    check_interval(t_start_ms, t_end_ms)?;
    let selected: Vec<&HeatmapFrame> = video
        .frames
        .iter()
        .zip(&video.frame_times)
        .filter(|(_, (s, e))| *s < t_end_ms && t_start_ms < *e)
        .map(|(f, _)| f)
        .collect();
    match selected.as_slice() {
        [] => Err(CoraxError::EmptySelection(format!(
            "no frame intersects [{t_start_ms}, {t_end_ms}]"
        ))),
        [only] => Ok((*only).clone()),
        [first, rest @ ..] => {
            let mut acc = (*first).clone();
            for f in rest {
                acc.add_assign(f);
            }
            let n = selected.len() as f64;
            acc.values.iter_mut().for_each(|v| *v /= n);
            Ok(acc)
        }
    }
}

/// Sum of raw accumulations of every fixation intersecting the interval.
pub fn static_accumulation(
    scan: &Scanpath,
    t_start_ms: u64,
    t_end_ms: u64,
    width: usize,
    height: usize,
    sigma_px: f64,
) -> Result<HeatmapFrame> {
    check_interval(t_start_ms, t_end_ms)?;
    check_dims(width, height, sigma_px)?;
    let mut grid = HeatmapFrame::zeros(width, height);
    let mut any = false;
    for f in scan.intersecting(t_start_ms, t_end_ms) {
        splat(&mut grid, f, sigma_px);
        any = true;
    }
    if !any {
        return Err(CoraxError::EmptySelection(format!(
            "no fixation intersects [{t_start_ms}, {t_end_ms}]"
        )));
    }
    Ok(grid)
}

/// All fixations in the interval pooled into one heatmap, no per-frame mean.
pub fn roi_static_heatmap(
    scan: &Scanpath,
    t_start_ms: u64,
    t_end_ms: u64,
    width: usize,
    height: usize,
    sigma_px: f64,
) -> Result<HeatmapFrame> {
    Ok(static_accumulation(scan, t_start_ms, t_end_ms, width, height, sigma_px)?.normalized())
}

/// Pixels at or above `threshold_frac * max`.
pub fn binarize(frame: &HeatmapFrame, threshold_frac: f64) -> Result<BinaryMask> {
    if !(threshold_frac > 0.0 && threshold_frac < 1.0) {
        return Err(CoraxError::Parameter(format!(
            "threshold fraction must lie in (0, 1), got {threshold_frac}"
        )));
    }
    let max = frame.max();
    if max <= 0.0 {
        return Err(CoraxError::EmptyMask("frame has no positive value".into()));
    }
    let cut = threshold_frac * max;
    Ok(BinaryMask {
        width: frame.width,
        height: frame.height,
        data: frame.values.iter().map(|v| *v >= cut).collect(),
    })
}

/// Parses the `start_ms,end_ms,x_norm,y_norm` fixation CSV.
pub fn parse_fixation_csv(text: &str) -> Result<Vec<Fixation>> {
    let mut lines = text.lines();
    let header = lines.next().unwrap_or_default().trim();
    if header != "start_ms,end_ms,x_norm,y_norm" {
        return Err(CoraxError::validation("header", format!("unexpected header `{header}`")));
    }
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').map(str::trim).collect();
        let bad = |field: &str| CoraxError::validation(format!("rows[{i}].{field}"), "unparseable");
        if cols.len() != 4 {
            return Err(CoraxError::validation(format!("rows[{i}]"), "expected 4 columns"));
        }
        out.push(Fixation {
            start_ms: cols[0].parse().map_err(|_| bad("start_ms"))?,
            end_ms: cols[1].parse().map_err(|_| bad("end_ms"))?,
            x_norm: cols[2].parse().map_err(|_| bad("x_norm"))?,
            y_norm: cols[3].parse().map_err(|_| bad("y_norm"))?,
        });
    }
    Ok(out)
}

pub fn write_fixation_csv(fixations: &[Fixation]) -> String {
    let mut out = String::from("start_ms,end_ms,x_norm,y_norm\n");
    for f in fixations {
        out.push_str(&format!("{},{},{},{}\n", f.start_ms, f.end_ms, f.x_norm, f.y_norm));
    }
    out
}
