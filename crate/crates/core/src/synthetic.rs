//! Seeded synthetic studies: planted findings, a report assembled from
//! dictionary phrases, a word-aligned dictation, and a scanpath that dwells
//! on each planted region while its phrase is spoken.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::seq::{SliceRandom, index};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bundle::{CaseBundle, CaseBundleFile, GroundTruth, Region, Shape};
use crate::error::{CoraxError, Result};
use crate::gaze::{Fixation, Scanpath};
use crate::grounding::{DEFAULT_TRANSCRIPT_PAD_MS, WordAlignment, prior_region_contains};
use crate::imageio::GrayImage;
use crate::labeler::Report;
use crate::labels::{Abnormality, LabelSet};

/// Positive cases per label in the reference test set of 271 studies.
pub const REFERENCE_CASES: usize = 271;
pub const REFERENCE_POSITIVES: [(Abnormality, usize); 5] = [
    (Abnormality::Cardiomegaly, 65),
    (Abnormality::PleuralEffusion, 65),
    (Abnormality::Atelectasis, 54),
    (Abnormality::LungOpacity, 94),
    (Abnormality::Edema, 54),
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PositivePlan {
    /// Reference positive counts scaled to the dataset size.
    Reference,
    /// Exactly this many positive cases per label.
    Exact { counts: BTreeMap<Abnormality, usize> },
    /// Independent per-label prevalence, resampled until a case has at least
    /// `min_findings` labels.
    Prevalence {
        probs: BTreeMap<Abnormality, f64>,
        min_findings: usize,
    },
}

impl PositivePlan {
    /// Reference prevalences with every case carrying a finding.
    pub fn every_case_positive() -> Self {
        PositivePlan::Prevalence {
            probs: REFERENCE_POSITIVES
                .iter()
                .map(|(a, k)| (*a, *k as f64 / REFERENCE_CASES as f64))
                .collect(),
            min_findings: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub cases: usize,
    pub seed: u64,
    pub plan: PositivePlan,
    pub image_size: usize,
    pub id_prefix: String,
}

impl SyntheticConfig {
    pub fn new(cases: usize, seed: u64) -> Self {
        SyntheticConfig {
            cases,
            seed,
            plan: PositivePlan::Reference,
            image_size: 128,
            id_prefix: "syn".into(),
        }
    }

    pub fn with_plan(mut self, plan: PositivePlan) -> Self {
        self.plan = plan;
        self
    }
}

/// Where the dictation of a finding's phrase lands, padded as the transcript
/// grounder pads it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlantedFinding {
    pub abnormality: Abnormality,
    pub window: (u64, u64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticCase {
    pub bundle: CaseBundle,
    pub planted: Vec<PlantedFinding>,
}

/// First positive label in vocabulary order.
pub fn lead_finding(labels: &LabelSet) -> Option<Abnormality> {
    labels.iter().next()
}

struct Template {
    prefix: &'static str,
    phrase: &'static str,
    suffix: &'static str,
}

const fn t(prefix: &'static str, phrase: &'static str, suffix: &'static str) -> Template {
    Template { prefix, phrase, suffix }
}

static CARDIOMEGALY_T: [Template; 4] = [
    t("moderate", "cardiomegaly", ""),
    t("mildly", "enlarged heart", ""),
    t("stable", "cardiomegaly", ""),
    t("", "cardiomegaly", ""),
];

static EFFUSION_T: [Template; 4] = [
    t("small left", "pleural effusion", ""),
    t("large right", "pleural effusion", ""),
    t("small bilateral", "effusions", ""),
    t("there is a moderate", "effusion", ""),
];

static ATELECTASIS_T: [Template; 3] = [
    t("bibasilar", "atelectasis", ""),
    t("band of", "atelectasis", "in the right base"),
    t("subsegmental", "atelectasis", ""),
];

static OPACITY_T: [Template; 4] = [
    t("patchy right infrahilar", "opacity", ""),
    t("dense", "opacity", "in the mid lung"),
    t("focal", "consolidation", "in the upper lobe"),
    t("could represent", "pneumonia", ""),
];

static EDEMA_T: [Template; 3] = [
    t("mild", "pulmonary edema", ""),
    t("appearance is consistent with", "edema", ""),
    t("could represent", "edema", "or infection"),
];

fn templates(abn: Abnormality) -> &'static [Template] {
    match abn {
        Abnormality::Cardiomegaly => &CARDIOMEGALY_T,
        Abnormality::PleuralEffusion => &EFFUSION_T,
        Abnormality::Atelectasis => &ATELECTASIS_T,
        Abnormality::LungOpacity => &OPACITY_T,
        Abnormality::Edema | Abnormality::Consolidation => &EDEMA_T,
    }
}

const NEUTRAL_SENTENCES: [&str; 8] = [
    "low lung volumes.",
    "sternotomy wires.",
    "no pneumothorax.",
    "prominent pulmonary vessels.",
    "the mediastinum is unremarkable.",
    "degenerative changes of the thoracic spine.",
    "cardiac clips.",
    "prosthetic heart valve.",
];

fn negative_sentence(abn: Abnormality) -> &'static str {
    match abn {
        Abnormality::Cardiomegaly => "no cardiomegaly.",
        Abnormality::PleuralEffusion => "no pleural effusion.",
        Abnormality::Atelectasis => "no atelectasis.",
        Abnormality::LungOpacity | Abnormality::Consolidation => "no focal consolidation.",
        Abnormality::Edema => "no pulmonary edema.",
    }
}

fn jitter(rng: &mut ChaCha8Rng, c: f64, d: f64) -> f64 {
    c + rng.random_range(-d..=d)
}

fn planted_shapes(rng: &mut ChaCha8Rng, abn: Abnormality) -> Vec<Shape> {
    let left = rng.random_bool(0.5);
    let side = |x: f64| if left { 1.0 - x } else { x };
    match abn {
        Abnormality::Cardiomegaly => vec![Shape::Ellipse {
            cx: jitter(rng, 0.56, 0.01),
            cy: jitter(rng, 0.66, 0.01),
            rx: rng.random_range(0.11..0.13),
            ry: rng.random_range(0.08..0.10),
        }],
        Abnormality::PleuralEffusion => vec![Shape::Ellipse {
            cx: jitter(rng, side(0.215), 0.01),
            cy: jitter(rng, 0.71, 0.01),
            rx: rng.random_range(0.045..0.055),
            ry: rng.random_range(0.06..0.07),
        }],
        Abnormality::Atelectasis => vec![Shape::Ellipse {
            cx: jitter(rng, 0.35, 0.01),
            cy: jitter(rng, 0.665, 0.01),
            rx: rng.random_range(0.045..0.055),
            ry: rng.random_range(0.045..0.055),
        }],
        Abnormality::LungOpacity | Abnormality::Consolidation => vec![Shape::Ellipse {
            cx: jitter(rng, side(0.30), 0.02),
            cy: jitter(rng, 0.36, 0.03),
            rx: rng.random_range(0.07..0.09),
            ry: rng.random_range(0.08..0.10),
        }],
        Abnormality::Edema => {
            let rx = rng.random_range(0.06..0.07);
            let ry = rng.random_range(0.08..0.10);
            vec![
                Shape::Ellipse { cx: 0.30, cy: 0.40, rx, ry },
                Shape::Ellipse { cx: 0.70, cy: 0.40, rx, ry },
            ]
        }
    }
}

/// Point inside the shape and the label's prior, kept out of the narrower
/// priors of other labels.
fn region_point(rng: &mut ChaCha8Rng, abn: Abnormality, shape: &Shape) -> (f64, f64) {
    let Shape::Ellipse { cx, cy, rx, ry } = *shape else {
        unreachable!("generator plants ellipses")
    };
    let narrow = [Abnormality::Cardiomegaly, Abnormality::PleuralEffusion, Abnormality::Atelectasis];
    for _ in 0..10_000 {
        let x = rng.random_range(cx - rx..=cx + rx).clamp(0.0, 1.0);
        let y = rng.random_range(cy - ry..=cy + ry).clamp(0.0, 1.0);
        if shape.contains(x, y)
            && prior_region_contains(abn, x, y)
            && !narrow.iter().any(|o| *o != abn && prior_region_contains(*o, x, y))
        {
            return (x, y);
        }
    }
    (cx, cy)
}

fn neutral_point(rng: &mut ChaCha8Rng) -> (f64, f64) {
    loop {
        let x = rng.random_range(0.03..0.97);
        let y = rng.random_range(0.03..0.97);
        if !Abnormality::ALL.iter().any(|a| prior_region_contains(*a, x, y)) {
            return (x, y);
        }
    }
}

fn fill_segment(
    rng: &mut ChaCha8Rng,
    out: &mut Vec<Fixation>,
    (a, b): (u64, u64),
    mut point: impl FnMut(&mut ChaCha8Rng) -> (f64, f64),
) {
    let first = out.len();
    let mut t = a;
    while t < b {
        let end = (t + rng.random_range(180..400)).min(b);
        if end - t < 60 {
            if out.len() > first {
                out.last_mut().unwrap().end_ms = b;
            }
            break;
        }
        let (x, y) = point(rng);
        out.push(Fixation {
            start_ms: t,
            end_ms: end,
            x_norm: x,
            y_norm: y,
        });
        t = end + rng.random_range(20..50);
    }
}

fn render_image(rng: &mut ChaCha8Rng, size: usize, truth: &GroundTruth) -> GrayImage {
    let body = Shape::Ellipse { cx: 0.5, cy: 0.55, rx: 0.46, ry: 0.5 };
    let mut pixels = Vec::with_capacity(size * size);
    for y in 0..size {
        for x in 0..size {
            let (xn, yn) = ((x as f64 + 0.5) / size as f64, (y as f64 + 0.5) / size as f64);
            let mut v: f64 = 20.0;
            if body.contains(xn, yn) {
                v = 95.0;
            }
            if prior_region_contains(Abnormality::LungOpacity, xn, yn) {
                v = 45.0;
            }
            if prior_region_contains(Abnormality::Cardiomegaly, xn, yn) {
                v = 150.0;
            }
            if (0.47..0.53).contains(&xn) && yn > 0.08 {
                v = v.max(170.0);
            }
            if truth.regions.iter().any(|r| r.shape.contains(xn, yn)) {
                v += 55.0;
            }
            v += rng.random_range(-8.0..8.0);
            pixels.push(v.clamp(0.0, 255.0).round() as u8);
        }
    }
    GrayImage::new(size, size, pixels).expect("size matches")
}

fn assign_labels(cfg: &SyntheticConfig, rng: &mut ChaCha8Rng) -> Result<Vec<LabelSet>> {
    let n = cfg.cases;
    let mut labels = vec![LabelSet::new(); n];
    let exact = |counts: BTreeMap<Abnormality, usize>, rng: &mut ChaCha8Rng, labels: &mut Vec<LabelSet>| {
        for (abn, k) in counts {
            if k > n {
                return Err(CoraxError::Parameter(format!("{k} positives for {abn} exceed {n} cases")));
            }
            for i in index::sample(rng, n, k) {
                labels[i].insert(abn);
            }
        }
        Ok(())
    };
    match &cfg.plan {
        PositivePlan::Reference => {
            let counts = REFERENCE_POSITIVES
                .iter()
                .map(|(a, k)| (*a, ((n * k) as f64 / REFERENCE_CASES as f64).round() as usize))
                .collect();
            exact(counts, rng, &mut labels)?;
        }
        PositivePlan::Exact { counts } => exact(counts.clone(), rng, &mut labels)?,
        PositivePlan::Prevalence { probs, min_findings } => {
            if *min_findings > probs.values().filter(|p| **p > 0.0).count() {
                return Err(CoraxError::Parameter("min_findings is unreachable".into()));
            }
            for set in labels.iter_mut() {
                loop {
                    *set = probs
                        .iter()
                        .filter(|(_, p)| rng.random_bool(p.clamp(0.0, 1.0)))
                        .map(|(a, _)| *a)
                        .collect();
                    if set.len() >= *min_findings {
                        break;
                    }
                }
            }
        }
    }
    Ok(labels)
}

enum Sentence {
    Plain(String),
    Finding(Abnormality, &'static Template),
}

fn generate_case(case_id: String, labels: LabelSet, size: usize, rng: &mut ChaCha8Rng) -> SyntheticCase {
    let regions: Vec<Region> = labels
        .iter()
        .flat_map(|abn| {
            planted_shapes(rng, abn)
                .into_iter()
                .map(move |shape| Region { abnormality: abn, shape })
        })
        .collect();
    let truth = GroundTruth { labels: labels.clone(), regions };

    let mut sentences: Vec<Sentence> = labels
        .iter()
        .map(|abn| {
            let ts = templates(abn);
            Sentence::Finding(abn, &ts[rng.random_range(0..ts.len())])
        })
        .collect();
    let mut neutral = NEUTRAL_SENTENCES.to_vec();
    neutral.shuffle(rng);
    let k = rng.random_range(1..=2);
    sentences.extend(neutral[..k].iter().map(|s| Sentence::Plain(s.to_string())));
    let absent: Vec<Abnormality> = Abnormality::EVALUATED
        .into_iter()
        .filter(|a| !labels.contains(*a))
        .collect();
    for abn in absent.iter().filter(|_| rng.random_bool(0.3)) {
        sentences.push(Sentence::Plain(negative_sentence(*abn).to_string()));
    }
    sentences.shuffle(rng);

    // dictation timeline
    let mut words = Vec::new();
    let mut planted = Vec::new();
    let mut cursor: u64 = rng.random_range(1000..1500);
    let mut last_window_end: Option<u64> = None;
    let mut text_parts = Vec::new();
    for s in &sentences {
        let (text, phrase_range, abn) = match s {
            Sentence::Plain(text) => (text.clone(), None, None),
            Sentence::Finding(abn, tpl) => {
                let parts: Vec<&str> = [tpl.prefix, tpl.phrase, tpl.suffix]
                    .into_iter()
                    .filter(|p| !p.is_empty())
                    .collect();
                let first = tpl.prefix.split_whitespace().count();
                let len = tpl.phrase.split_whitespace().count();
                (format!("{}.", parts.join(" ")), Some(first..first + len), Some(*abn))
            }
        };
        let mut phrase_span = (0, 0);
        for (wi, word) in text.split_whitespace().enumerate() {
            if let (Some(r), Some(end)) = (&phrase_range, last_window_end) {
                if wi == r.start {
                    cursor = cursor.max(end + 1300);
                }
            }
            let dur = rng.random_range(220..420);
            if let Some(r) = &phrase_range {
                if wi == r.start {
                    phrase_span.0 = cursor;
                }
                if wi + 1 == r.end {
                    phrase_span.1 = cursor + dur;
                }
            }
            words.push(WordAlignment {
                word: word.to_string(),
                t_start_ms: cursor,
                t_end_ms: cursor + dur,
            });
            cursor += dur + rng.random_range(0..60);
        }
        if let Some(abn) = abn {
            let window = (
                phrase_span.0 - DEFAULT_TRANSCRIPT_PAD_MS,
                phrase_span.1 + DEFAULT_TRANSCRIPT_PAD_MS,
            );
            last_window_end = Some(window.1);
            planted.push(PlantedFinding { abnormality: abn, window });
        }
        cursor += rng.random_range(500..900);
        text_parts.push(text);
    }
    let total = cursor.max(last_window_end.unwrap_or(0)) + rng.random_range(800..1500);

    // gaze: planted regions during their dictation windows, elsewhere
    // outside every prior
    let mut fixations = Vec::new();
    let mut t = 0;
    for p in &planted {
        fill_segment(rng, &mut fixations, (t, p.window.0), neutral_point);
        let shapes: Vec<Shape> = truth
            .regions
            .iter()
            .filter(|r| r.abnormality == p.abnormality)
            .map(|r| r.shape)
            .collect();
        let mut k = 0;
        fill_segment(rng, &mut fixations, p.window, |rng| {
            k += 1;
            region_point(rng, p.abnormality, &shapes[k % shapes.len()])
        });
        t = p.window.1;
    }
    fill_segment(rng, &mut fixations, (t, total), neutral_point);

    let image = render_image(rng, size, &truth);
    let scanpath = Scanpath {
        case_id: case_id.clone(),
        fixations,
        total_duration_ms: total,
    };
    SyntheticCase {
        bundle: CaseBundle {
            report: Report::new(case_id.clone(), text_parts.join(" ")),
            case_id,
            image,
            scanpath,
            transcript: Some(words),
            ground_truth: truth,
        },
        planted,
    }
}

pub fn generate(cfg: &SyntheticConfig) -> Result<Vec<SyntheticCase>> {
    if cfg.cases == 0 {
        return Err(CoraxError::Parameter("at least one case is required".into()));
    }
    if cfg.image_size < 32 {
        return Err(CoraxError::Parameter("image size must be at least 32".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let labels = assign_labels(cfg, &mut rng)?;
    let width = cfg.cases.to_string().len().max(4);
    Ok(labels
        .into_iter()
        .enumerate()
        .map(|(i, set)| {
            let mut case_rng = ChaCha8Rng::seed_from_u64(rng.random());
            generate_case(format!("{}-{:0width$}", cfg.id_prefix, i + 1), set, cfg.image_size, &mut case_rng)
        })
        .collect())
}

pub fn positive_counts(cases: &[CaseBundle]) -> BTreeMap<Abnormality, usize> {
    let mut out: BTreeMap<Abnormality, usize> = BTreeMap::new();
    for c in cases {
        for a in c.ground_truth.labels.iter() {
            *out.entry(a).or_default() += 1;
        }
    }
    out
}

#[derive(Serialize, Deserialize)]
struct DatasetManifest {
    config: SyntheticConfig,
    positives: BTreeMap<Abnormality, usize>,
    planted: BTreeMap<String, Vec<PlantedFinding>>,
}

/// Writes `cases/<id>.json`, `images/<id>.png` and `dataset.json`.
pub fn write_dataset(dir: &Path, cfg: &SyntheticConfig, cases: &[SyntheticCase]) -> Result<()> {
    std::fs::create_dir_all(dir.join("cases"))?;
    std::fs::create_dir_all(dir.join("images"))?;
    for c in cases {
        let b = &c.bundle;
        let file = CaseBundleFile {
            case_id: b.case_id.clone(),
            image_path: Some(format!("../images/{}.png", b.case_id)),
            image_b64: None,
            scanpath: Scanpath {
                case_id: String::new(),
                ..b.scanpath.clone()
            },
            report: b.report.text.clone(),
            transcript: b.transcript.clone(),
            ground_truth: b.ground_truth.clone(),
        };
        b.image.save(&dir.join("images").join(format!("{}.png", b.case_id)))?;
        std::fs::write(
            dir.join("cases").join(format!("{}.json", b.case_id)),
            serde_json::to_string_pretty(&file)? + "\n",
        )?;
    }
    let bundles: Vec<CaseBundle> = cases.iter().map(|c| c.bundle.clone()).collect();
    let manifest = DatasetManifest {
        config: cfg.clone(),
        positives: positive_counts(&bundles),
        planted: cases
            .iter()
            .map(|c| (c.bundle.case_id.clone(), c.planted.clone()))
            .collect(),
    };
    std::fs::write(dir.join("dataset.json"), serde_json::to_string_pretty(&manifest)? + "\n")?;
    Ok(())
}

/// Bundle directory of a dataset root: `cases/` when present.
pub fn cases_dir(dir: &Path) -> PathBuf {
    let nested = dir.join("cases");
    if nested.is_dir() { nested } else { dir.to_path_buf() }
}
