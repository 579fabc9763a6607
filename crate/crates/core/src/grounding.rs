//! Temporal grounding of findings in the gaze recording.
//!
//! Two grounders share one output type: a dwell grounder that scores sliding
//! windows by prior-weighted fixation time, and a transcript grounder that
//! locates the dictated phrase in a word-aligned transcript.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{CoraxError, Result};
use crate::gaze::{BinaryMask, Scanpath};
use crate::imageio::GrayImage;
use crate::labeler::{Labeler, Report};
use crate::labels::{Abnormality, LabelSet};

pub const DEFAULT_WINDOW_MS: u64 = 2000;
pub const DEFAULT_STRIDE_MS: u64 = 250;
pub const DEFAULT_TRANSCRIPT_PAD_MS: u64 = 500;
pub const ATLAS_RESOLUTION: usize = 128;

#[derive(Clone, Debug, PartialEq)]
pub struct AnatomicalPrior {
    pub abnormality: Abnormality,
    pub mask: BinaryMask,
}

impl AnatomicalPrior {
    pub fn value_at(&self, x_norm: f64, y_norm: f64) -> f64 {
        if self.mask.at_norm(x_norm, y_norm) {
            1.0
        } else {
            0.0
        }
    }
}

/// Axis-aligned ellipse in normalized image coordinates.
#[derive(Copy, Clone, Debug, PartialEq)]
struct Ellipse {
    cx: f64,
    cy: f64,
    rx: f64,
    ry: f64,
}

impl Ellipse {
    fn contains(&self, x: f64, y: f64) -> bool {
        let dx = (x - self.cx) / self.rx;
        let dy = (y - self.cy) / self.ry;
        dx * dx + dy * dy <= 1.0
    }
}

const RIGHT_LUNG: Ellipse = Ellipse { cx: 0.31, cy: 0.48, rx: 0.17, ry: 0.34 };
const LEFT_LUNG: Ellipse = Ellipse { cx: 0.69, cy: 0.48, rx: 0.17, ry: 0.34 };
const HEART: Ellipse = Ellipse { cx: 0.56, cy: 0.66, rx: 0.15, ry: 0.12 };

/// Geometry of the bundled atlas, as a predicate on normalized coordinates.
pub fn prior_region_contains(abn: Abnormality, x: f64, y: f64) -> bool {
    let lung = (RIGHT_LUNG.contains(x, y) || LEFT_LUNG.contains(x, y)) && !HEART.contains(x, y);
    match abn {
        Abnormality::Cardiomegaly => HEART.contains(x, y),
        Abnormality::PleuralEffusion => lung && y >= 0.62 && !(0.27..=0.73).contains(&x),
        Abnormality::Atelectasis => lung && y >= 0.58 && (0.27..=0.73).contains(&x),
        Abnormality::LungOpacity | Abnormality::Edema | Abnormality::Consolidation => lung,
    }
}

#[derive(Serialize, Deserialize)]
struct AtlasManifest {
    resolution: [usize; 2],
    priors: BTreeMap<Abnormality, String>,
}

/// One prior mask per abnormality, at a shared resolution.
#[derive(Clone, Debug, PartialEq)]
pub struct PriorAtlas {
    priors: BTreeMap<Abnormality, AnatomicalPrior>,
}

impl Default for PriorAtlas {
    fn default() -> Self {
        let n = ATLAS_RESOLUTION;
        let priors = Abnormality::ALL
            .into_iter()
            .map(|abn| {
                let mask = BinaryMask::from_fn(n, n, |x, y| {
                    prior_region_contains(abn, (x as f64 + 0.5) / n as f64, (y as f64 + 0.5) / n as f64)
                });
                (abn, AnatomicalPrior { abnormality: abn, mask })
            })
            .collect();
        PriorAtlas { priors }
    }
}

impl PriorAtlas {
    pub fn new(priors: impl IntoIterator<Item = AnatomicalPrior>) -> Result<Self> {
        let priors: BTreeMap<_, _> = priors.into_iter().map(|p| (p.abnormality, p)).collect();
        for p in priors.values() {
            if p.mask.is_empty() {
                return Err(CoraxError::Config(format!("prior for {} is empty", p.abnormality)));
            }
        }
        Ok(PriorAtlas { priors })
    }

    pub fn get(&self, abn: Abnormality) -> Result<&AnatomicalPrior> {
        self.priors
            .get(&abn)
            .ok_or_else(|| CoraxError::Config(format!("no anatomical prior for {abn}")))
    }

    pub fn iter(&self) -> impl Iterator<Item = &AnatomicalPrior> {
        self.priors.values()
    }

    /// Loads `manifest.json` and the `<abnormality>.pgm` masks it lists.
    pub fn load_dir(dir: &Path) -> Result<Self> {
        let manifest: AtlasManifest =
            serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json"))?)?;
        let [w, h] = manifest.resolution;
        let mut priors = Vec::new();
        for (abn, file) in manifest.priors {
            let mask = GrayImage::load(&dir.join(&file))?.to_mask();
            if (mask.width, mask.height) != (w, h) {
                return Err(CoraxError::Config(format!(
                    "{file} is {}x{}, manifest says {w}x{h}",
                    mask.width, mask.height
                )));
            }
            priors.push(AnatomicalPrior { abnormality: abn, mask });
        }
        Self::new(priors)
    }

    pub fn save_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let mut manifest = AtlasManifest {
            resolution: [0, 0],
            priors: BTreeMap::new(),
        };
        for p in self.priors.values() {
            let file = format!("{}.pgm", p.abnormality.slug());
            GrayImage::from_mask(&p.mask).save(&dir.join(&file))?;
            manifest.resolution = [p.mask.width, p.mask.height];
            manifest.priors.insert(p.abnormality, file);
        }
        std::fs::write(
            dir.join("manifest.json"),
            serde_json::to_string_pretty(&manifest)? + "\n",
        )?;
        Ok(())
    }
}

/// Fraction of fixated time spent inside the prior.
pub fn dwell_fraction(scan: &Scanpath, prior: &AnatomicalPrior) -> f64 {
    let total: u64 = scan.fixations.iter().map(|f| f.duration_ms()).sum();
    if total == 0 {
        return 0.0;
    }
    let inside: f64 = scan
        .fixations
        .iter()
        .map(|f| f.duration_ms() as f64 * prior.value_at(f.x_norm, f.y_norm))
        .sum();
    inside / total as f64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundedFinding {
    pub abnormality: Abnormality,
    pub t_start_ms: u64,
    pub t_end_ms: u64,
    pub score: f64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WordAlignment {
    pub word: String,
    pub t_start_ms: u64,
    pub t_end_ms: u64,
}

/// Candidate windows over `[0, total_ms]`: starts at multiples of the
/// stride while the window fits, plus one window flush with the end when the
/// stride grid leaves a tail uncovered. A recording shorter than the window
/// yields the single window `[0, total_ms]`.
pub fn candidate_windows(total_ms: u64, window_ms: u64, stride_ms: u64) -> Vec<(u64, u64)> {
    if total_ms == 0 {
        return Vec::new();
    }
    if total_ms <= window_ms {
        return vec![(0, total_ms)];
    }
    let mut out: Vec<(u64, u64)> = (0..)
        .map(|k| k * stride_ms)
        .take_while(|s| s + window_ms <= total_ms)
        .map(|s| (s, s + window_ms))
        .collect();
    if out.last().is_some_and(|w| w.1 < total_ms) {
        out.push((total_ms - window_ms, total_ms));
    }
    out
}

/// Prior-weighted dwell accumulated over `[0, t]`, evaluated through
/// per-fixation prefix sums.
struct DwellCurve {
    // (start, end, weight) sorted by start; non-overlapping
    spans: Vec<(u64, u64, f64)>,
    // prefix[i] = dwell of spans[..i]
    prefix: Vec<f64>,
}

impl DwellCurve {
    fn new(scan: &Scanpath, prior: &AnatomicalPrior) -> Self {
        let spans: Vec<_> = scan
            .fixations
            .iter()
            .map(|f| (f.start_ms, f.end_ms, prior.value_at(f.x_norm, f.y_norm)))
            .filter(|s| s.2 > 0.0)
            .collect();
        let mut prefix = Vec::with_capacity(spans.len() + 1);
        prefix.push(0.0);
        for (s, e, w) in &spans {
            prefix.push(prefix.last().unwrap() + (e - s) as f64 * w);
        }
        DwellCurve { spans, prefix }
    }

    fn at(&self, t: u64) -> f64 {
        // spans starting strictly before t contribute
        let i = self.spans.partition_point(|s| s.0 < t);
        if i == 0 {
            return 0.0;
        }
        let (s, e, w) = self.spans[i - 1];
        self.prefix[i - 1] + (t.min(e) - s) as f64 * w
    }

    fn window(&self, start: u64, end: u64) -> f64 {
        self.at(end) - self.at(start)
    }
}

/// For each label, the highest-dwell window (earliest on ties). A window's
/// score is the fixation time inside it, weighted by the label's prior at
/// each fixation location. Labels with zero dwell everywhere are omitted.
pub fn ground_by_dwell(
    labels: &LabelSet,
    scan: &Scanpath,
    atlas: &PriorAtlas,
    window_ms: u64,
    stride_ms: u64,
) -> Result<Vec<GroundedFinding>> {
    if window_ms == 0 || stride_ms == 0 {
        return Err(CoraxError::Parameter("window and stride must be positive".into()));
    }
    let windows = candidate_windows(scan.total_duration_ms, window_ms, stride_ms);
    let mut out = Vec::new();
    for abn in labels.iter() {
        let curve = DwellCurve::new(scan, atlas.get(abn)?);
        let mut best: Option<((u64, u64), f64)> = None;
        for &(s, e) in &windows {
            let score = curve.window(s, e);
            if best.is_none_or(|(_, b)| score > b) {
                best = Some(((s, e), score));
            }
        }
        if let Some(((s, e), score)) = best.filter(|b| b.1 > 0.0) {
            out.push(GroundedFinding {
                abnormality: abn,
                t_start_ms: s,
                t_end_ms: e,
                score,
            });
        }
    }
    Ok(out)
}

/// Locates the first non-negated dictionary phrase for each label in the
/// transcript and pads it by `pad_ms` on both sides, clamped to
/// `[0, total_duration_ms]`. Labels never mentioned are omitted.
pub fn ground_by_transcript(
    labels: &LabelSet,
    words: &[WordAlignment],
    labeler: &Labeler,
    pad_ms: u64,
    total_duration_ms: u64,
) -> Result<Vec<GroundedFinding>> {
    if words.is_empty() {
        return Err(CoraxError::EmptyInput("transcript has no words".into()));
    }
    let mut text = String::new();
    let mut ranges = Vec::with_capacity(words.len());
    for w in words {
        if !text.is_empty() {
            text.push(' ');
        }
        let start = text.len();
        text.push_str(&w.word);
        ranges.push(start..text.len());
    }
    let mentions = labeler.mentions(&Report::new("", text));
    let word_at = |byte: usize| ranges.iter().position(|r| r.start <= byte && byte < r.end);

    let mut out = Vec::new();
    for abn in labels.iter() {
        let Some(m) = mentions.iter().find(|m| m.abnormality == abn && !m.negated) else {
            continue;
        };
        let (Some(first), Some(last)) = (word_at(m.span.start), word_at(m.span.end - 1)) else {
            continue;
        };
        let start = words[first].t_start_ms.saturating_sub(pad_ms);
        let end = (words[last].t_end_ms + pad_ms).min(total_duration_ms);
        if start < end {
            out.push(GroundedFinding {
                abnormality: abn,
                t_start_ms: start,
                t_end_ms: end,
                score: (words[last].t_end_ms - words[first].t_start_ms) as f64,
            });
        }
    }
    Ok(out)
}

/// Intersection over union of two time intervals.
pub fn temporal_iou(a: (u64, u64), b: (u64, u64)) -> f64 {
    let inter = a.1.min(b.1).saturating_sub(a.0.max(b.0));
    let union = (a.1 - a.0) + (b.1 - b.0) - inter;
    if union == 0 {
        return 0.0;
    }
    inter as f64 / union as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaze::Fixation;
    use Abnormality::*;

    fn words(spec: &[(&str, u64, u64)]) -> Vec<WordAlignment> {
        spec.iter()
            .map(|(w, s, e)| WordAlignment {
                word: w.to_string(),
                t_start_ms: *s,
                t_end_ms: *e,
            })
            .collect()
    }

    #[test]
    fn atlas_priors_are_nonempty_and_separated() {
        let atlas = PriorAtlas::default();
        for abn in Abnormality::ALL {
            assert!(!atlas.get(abn).unwrap().mask.is_empty(), "{abn}");
        }
        let heart = &atlas.get(Cardiomegaly).unwrap().mask;
        let lung = &atlas.get(LungOpacity).unwrap().mask;
        let eff = &atlas.get(PleuralEffusion).unwrap().mask;
        let atel = &atlas.get(Atelectasis).unwrap().mask;
        for i in 0..heart.data.len() {
            assert!(!(heart.data[i] && lung.data[i]));
            assert!(!(eff.data[i] && atel.data[i]));
        }
    }

    #[test]
    fn atlas_dir_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let atlas = PriorAtlas::default();
        atlas.save_dir(dir.path()).unwrap();
        assert!(dir.path().join("cardiomegaly.pgm").exists());
        assert_eq!(PriorAtlas::load_dir(dir.path()).unwrap(), atlas);
    }

    #[test]
    fn transcript_pads_and_clamps() {
        let labeler = Labeler::default();
        let w = words(&[
            ("mildly", 4800, 5200),
            ("enlarged", 5200, 5600),
            ("heart.", 5600, 5900),
            ("no", 6000, 6100),
            ("effusion.", 6100, 6500),
        ]);
        let labels = LabelSet::from([Cardiomegaly, PleuralEffusion]);
        let g = ground_by_transcript(&labels, &w, &labeler, 500, 10_000).unwrap();
        assert_eq!(g.len(), 1);
        assert_eq!((g[0].abnormality, g[0].t_start_ms, g[0].t_end_ms), (Cardiomegaly, 4700, 6400));

        let w = words(&[("edema.", 0, 300)]);
        let g = ground_by_transcript(&LabelSet::from([Edema]), &w, &labeler, 500, 600).unwrap();
        assert_eq!((g[0].t_start_ms, g[0].t_end_ms), (0, 600));

        assert!(ground_by_transcript(&labels, &[], &labeler, 500, 1).is_err());
    }

    #[test]
    fn temporal_iou_values() {
        assert_eq!(temporal_iou((100, 900), (100, 900)), 1.0);
        assert_eq!(temporal_iou((0, 100), (200, 300)), 0.0);
        assert!((temporal_iou((0, 2000), (1000, 3000)) - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn windows_cover_tail() {
        assert_eq!(candidate_windows(500, 2000, 250), vec![(0, 500)]);
        assert_eq!(
            candidate_windows(2600, 2000, 250),
            vec![(0, 2000), (250, 2250), (500, 2500), (600, 2600)]
        );
        assert_eq!(candidate_windows(2500, 2000, 250).last(), Some(&(500, 2500)));
        assert!(candidate_windows(0, 2000, 250).is_empty());
    }

    #[test]
    fn dwell_abstains_and_errors() {
        let atlas = PriorAtlas::default();
        // upper mediastinum lies outside every prior
        let scan = Scanpath::new(
            "c",
            vec![Fixation { start_ms: 0, end_ms: 900, x_norm: 0.5, y_norm: 0.1 }],
            1000,
        )
        .unwrap();
        let g = ground_by_dwell(&LabelSet::from([PleuralEffusion]), &scan, &atlas, 2000, 250).unwrap();
        assert!(g.is_empty());
        let partial = PriorAtlas::new([atlas.get(Edema).unwrap().clone()]).unwrap();
        assert!(matches!(
            ground_by_dwell(&LabelSet::from([Cardiomegaly]), &scan, &partial, 2000, 250),
            Err(CoraxError::Config(_))
        ));
        assert!(ground_by_dwell(&LabelSet::new(), &scan, &atlas, 0, 250).is_err());
    }

    #[test]
    fn dwell_fraction_counts_time_inside() {
        let atlas = PriorAtlas::default();
        let heart = atlas.get(Cardiomegaly).unwrap();
        let scan = Scanpath::new(
            "c",
            vec![
                Fixation { start_ms: 0, end_ms: 900, x_norm: 0.56, y_norm: 0.66 },
                Fixation { start_ms: 900, end_ms: 1000, x_norm: 0.5, y_norm: 0.1 },
            ],
            1000,
        )
        .unwrap();
        assert!((dwell_fraction(&scan, heart) - 0.9).abs() < 1e-12);
    }
}
