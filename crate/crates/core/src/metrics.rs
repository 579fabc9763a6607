//! Referral evaluation: confusion counts, correction and over-diagnosis
//! rates, usefulness scores, and the CSV feeds behind the plots.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::ops::{Add, AddAssign};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bundle::GroundTruth;
use crate::error::{CoraxError, Result};
use crate::error_sim::{ErrorRecord, misses_by_case};
use crate::gaze::{self, BinaryMask, DEFAULT_THRESHOLD_FRAC};
use crate::labels::{Abnormality, LabelSet};
use crate::referral::{CaseAnalysis, GrounderConfig, Pipeline, Referral, ReviewStatus};
use crate::stats::{self, CdfPoint, ConfidenceInterval, EmpiricalCdf};

pub const CI_LEVEL: f64 = 0.95;

#[derive(Copy, Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tr: u64,
    pub fr: u64,
    pub fd: u64,
    pub td: u64,
}

impl ConfusionCounts {
    pub fn new(tr: u64, fd: u64, fr: u64, td: u64) -> Self {
        ConfusionCounts { tr, fr, fd, td }
    }
}

impl Add for ConfusionCounts {
    type Output = ConfusionCounts;

    fn add(self, o: ConfusionCounts) -> ConfusionCounts {
        ConfusionCounts {
            tr: self.tr + o.tr,
            fr: self.fr + o.fr,
            fd: self.fd + o.fd,
            td: self.td + o.td,
        }
    }
}

impl AddAssign for ConfusionCounts {
    fn add_assign(&mut self, o: ConfusionCounts) {
        *self = *self + o;
    }
}

/// Perceptual error correction rate, `100 · TR / (TR + FD)`.
pub fn pecr(c: &ConfusionCounts) -> Result<f64> {
    if c.tr + c.fd == 0 {
        return Err(CoraxError::UndefinedMetric("PECR with no misses".into()));
    }
    Ok(100.0 * c.tr as f64 / (c.tr + c.fd) as f64)
}

/// Over-diagnosis error rate, `100 · FR / (FR + TD)`.
pub fn oder(c: &ConfusionCounts) -> Result<f64> {
    if c.fr + c.td == 0 {
        return Err(CoraxError::UndefinedMetric("ODER with no non-miss opportunities".into()));
    }
    Ok(100.0 * c.fr as f64 / (c.fr + c.td) as f64)
}

pub fn spatial_iou(pred: &BinaryMask, truth: &BinaryMask) -> Result<f64> {
    if (pred.width, pred.height) != (truth.width, truth.height) {
        return Err(CoraxError::Parameter(format!(
            "mask sizes differ: {}x{} vs {}x{}",
            pred.width, pred.height, truth.width, truth.height
        )));
    }
    let (mut inter, mut union) = (0usize, 0usize);
    for (p, t) in pred.data.iter().zip(&truth.data) {
        inter += (*p && *t) as usize;
        union += (*p || *t) as usize;
    }
    if union == 0 {
        return Err(CoraxError::UndefinedMetric("IoU of two empty masks".into()));
    }
    Ok(inter as f64 / union as f64)
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleKind {
    ReferralBased,
    DeferralBased,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UsefulnessSample {
    /// Referral id for referral samples, case id for case samples.
    pub id: String,
    pub case_id: String,
    pub kind: SampleKind,
    pub value: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub abnormality: Option<Abnormality>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub accepted: Option<bool>,
}

/// `1{accepted} · IoU(binarize(roi), truth)`.
pub fn referral_usefulness(
    referral: &Referral,
    truth_region: &BinaryMask,
    threshold_frac: f64,
) -> Result<UsefulnessSample> {
    let accepted = match referral.status {
        ReviewStatus::Pending => {
            return Err(CoraxError::State(format!(
                "referral {} is undecided",
                referral.referral_id
            )));
        }
        ReviewStatus::Accepted => true,
        ReviewStatus::Rejected => false,
    };
    let value = if accepted {
        let roi = referral.roi.as_ref().ok_or_else(|| {
            CoraxError::State(format!("referral {} has no ROI", referral.referral_id))
        })?;
        spatial_iou(&gaze::binarize(roi, threshold_frac)?, truth_region)?
    } else {
        0.0
    };
    Ok(UsefulnessSample {
        id: referral.referral_id.clone(),
        case_id: referral.case_id.clone(),
        kind: SampleKind::ReferralBased,
        value,
        abnormality: Some(referral.abnormality),
        accepted: Some(accepted),
    })
}

/// One analysed, fully reviewed case with what is known about it.
#[derive(Clone, Debug)]
pub struct CaseOutcome {
    pub analysis: CaseAnalysis,
    pub ground_truth: GroundTruth,
    /// Findings the submitted report is missing.
    pub misses: LabelSet,
    /// Image size; truth regions are rasterized at this resolution.
    pub dims: (usize, usize),
}

impl CaseOutcome {
    pub fn referral_samples(&self, threshold_frac: f64) -> Result<Vec<UsefulnessSample>> {
        let (w, h) = self.dims;
        self.analysis
            .referrals
            .iter()
            .map(|r| {
                let truth = self.ground_truth.region_mask(r.abnormality, w, h);
                referral_usefulness(r, &truth, threshold_frac)
            })
            .collect()
    }
}

/// Deferral: 1 when nothing was missed, else 0. Referral: mean of the
/// case's referral usefulness values.
pub fn total_usefulness(outcome: &CaseOutcome, threshold_frac: f64) -> Result<UsefulnessSample> {
    let case_id = outcome.analysis.case_id.clone();
    if outcome.analysis.is_deferral() {
        return Ok(UsefulnessSample {
            id: case_id.clone(),
            case_id,
            kind: SampleKind::DeferralBased,
            value: if outcome.misses.is_empty() { 1.0 } else { 0.0 },
            abnormality: None,
            accepted: None,
        });
    }
    let samples = outcome.referral_samples(threshold_frac)?;
    Ok(UsefulnessSample {
        id: case_id.clone(),
        case_id,
        kind: SampleKind::ReferralBased,
        value: samples.iter().map(|s| s.value).sum::<f64>() / samples.len() as f64,
        abnormality: None,
        accepted: None,
    })
}

/// Counting rule for one label of one case.
pub fn classify(outcome: &CaseOutcome, abn: Abnormality) -> ConfusionCounts {
    let referral = outcome.analysis.referrals.iter().find(|r| r.abnormality == abn);
    let missed = outcome.misses.contains(abn);
    match (missed, referral) {
        (true, Some(r)) if r.status == ReviewStatus::Accepted => ConfusionCounts::new(1, 0, 0, 0),
        (true, _) => ConfusionCounts::new(0, 1, 0, 0),
        (false, Some(_)) => ConfusionCounts::new(0, 0, 1, 0),
        (false, None) => ConfusionCounts::new(0, 0, 0, 1),
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub backend: String,
    pub grounder: String,
    pub roi_mode: String,
    pub threshold_frac: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window_ms: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stride_ms: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pad_ms: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_px: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error_seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset: Option<String>,
    pub labels: Vec<Abnormality>,
}

impl Provenance {
    /// Configuration of a pipeline run over the evaluated labels.
    pub fn for_pipeline(p: &Pipeline) -> Self {
        let (window_ms, stride_ms, pad_ms) = match p.grounder {
            GrounderConfig::Dwell { window_ms, stride_ms } => (Some(window_ms), Some(stride_ms), None),
            GrounderConfig::Transcript { pad_ms } => (None, None, Some(pad_ms)),
        };
        Provenance {
            backend: p.oracle.name().into(),
            grounder: p.grounder.name().into(),
            roi_mode: p.roi_mode.as_str().into(),
            threshold_frac: DEFAULT_THRESHOLD_FRAC,
            window_ms,
            stride_ms,
            pad_ms,
            sigma_px: p.sigma_px,
            labels: Abnormality::EVALUATED.to_vec(),
            ..Default::default()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub n: usize,
    pub mean: Option<f64>,
    pub ci: Option<ConfidenceInterval>,
}

impl Summary {
    pub fn of(values: &[f64]) -> Summary {
        Summary {
            n: values.len(),
            mean: (!values.is_empty()).then(|| stats::mean(values)),
            ci: stats::confidence_interval(values, CI_LEVEL).ok(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelMetrics {
    pub abnormality: Abnormality,
    pub counts: ConfusionCounts,
    pub pecr: Option<f64>,
    pub oder: Option<f64>,
    /// Usefulness over this label's true referrals.
    pub ru_true_referrals: Summary,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct InteractionBreakdown {
    pub interactions: usize,
    pub referral_based: usize,
    pub deferral_based: usize,
    pub correct_deferrals: usize,
    pub incorrect_deferrals: usize,
    pub referrals: usize,
    pub referrals_accepted: usize,
    pub referrals_rejected: usize,
    pub referrals_ru_above_0_2: usize,
    pub referrals_ru_zero: usize,
    pub interactions_tu_above_0_4: usize,
    pub fraction_referral_based: f64,
    pub fraction_correct_deferral: f64,
    pub fraction_incorrect_deferral: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub provenance: Provenance,
    pub per_label: Vec<LabelMetrics>,
    pub totals: LabelTotals,
    pub injected_errors: usize,
    pub ru_true_referrals: Summary,
    pub breakdown: InteractionBreakdown,
    pub ru_samples: Vec<UsefulnessSample>,
    pub tu_samples: Vec<UsefulnessSample>,
    pub cdf_ru: Vec<CdfPoint>,
    pub cdf_tu: Vec<CdfPoint>,
    /// Metrics that could not be computed, e.g. `pecr:edema`.
    pub undefined: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelTotals {
    pub counts: ConfusionCounts,
    pub pecr: Option<f64>,
    pub oder: Option<f64>,
}

impl MetricsReport {
    pub fn label(&self, abn: Abnormality) -> Option<&LabelMetrics> {
        self.per_label.iter().find(|l| l.abnormality == abn)
    }

    pub fn has_undefined(&self) -> bool {
        !self.undefined.is_empty()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn confusion_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.4}")).unwrap_or_default();
        let mut out = String::from("abnormality,tr,fd,pecr,fr,td,oder\n");
        for l in &self.per_label {
            let c = l.counts;
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                l.abnormality, c.tr, c.fd, opt(l.pecr), c.fr, c.td, opt(l.oder)
            );
        }
        out
    }

    pub fn ru_samples_csv(&self) -> String {
        let mut out = String::from("referral_id,case_id,abnormality,accepted,value\n");
        for s in &self.ru_samples {
            let abn = s.abnormality.map(|a| a.slug()).unwrap_or_default();
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                s.id,
                s.case_id,
                abn,
                s.accepted.unwrap_or(false),
                s.value
            );
        }
        out
    }

    pub fn tu_samples_csv(&self) -> String {
        let mut out = String::from("case_id,kind,value\n");
        for s in &self.tu_samples {
            let kind = match s.kind {
                SampleKind::ReferralBased => "referral",
                SampleKind::DeferralBased => "deferral",
            };
            let _ = writeln!(out, "{},{},{}", s.case_id, kind, s.value);
        }
        out
    }

    pub fn cdf_csv(points: &[CdfPoint]) -> String {
        let mut out = String::from("x,f,count\n");
        for p in points {
            let _ = writeln!(out, "{},{},{}", p.x, p.f, p.count);
        }
        out
    }

    /// `metrics.json` plus the five CSV feeds.
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("metrics.json"), self.to_json()?)?;
        std::fs::write(dir.join("confusion.csv"), self.confusion_csv())?;
        std::fs::write(dir.join("ru_samples.csv"), self.ru_samples_csv())?;
        std::fs::write(dir.join("tu_samples.csv"), self.tu_samples_csv())?;
        std::fs::write(dir.join("cdf_ru.csv"), Self::cdf_csv(&self.cdf_ru))?;
        std::fs::write(dir.join("cdf_tu.csv"), Self::cdf_csv(&self.cdf_tu))?;
        Ok(())
    }
}

fn cdf_points(values: &[f64]) -> Vec<CdfPoint> {
    EmpiricalCdf::new(values).map(|c| c.points).unwrap_or_default()
}

/// Aggregates reviewed cases into a report. When `records` is given, the
/// per-case misses must agree with them and `Σ (TR + FD)` must equal the
/// record count.
pub fn build_report(
    outcomes: &[CaseOutcome],
    records: Option<&[ErrorRecord]>,
    provenance: Provenance,
) -> Result<MetricsReport> {
    let threshold = provenance.threshold_frac;
    for o in outcomes {
        if !o.analysis.all_decided() {
            return Err(CoraxError::State(format!(
                "case {} has undecided referrals",
                o.analysis.case_id
            )));
        }
        o.analysis.check_invariants()?;
    }
    if let Some(records) = records {
        let by_case = misses_by_case(records);
        for o in outcomes {
            let expected = by_case.get(&o.analysis.case_id).cloned().unwrap_or_default();
            if expected != o.misses {
                return Err(CoraxError::State(format!(
                    "case {}: misses {} disagree with error records {}",
                    o.analysis.case_id, o.misses, expected
                )));
            }
        }
    }

    let labels = provenance.labels.clone();
    let mut ru_samples = Vec::new();
    let mut tu_samples = Vec::with_capacity(outcomes.len());
    let mut counts: BTreeMap<Abnormality, ConfusionCounts> =
        labels.iter().map(|a| (*a, ConfusionCounts::default())).collect();
    let mut tr_ru: BTreeMap<Abnormality, Vec<f64>> = BTreeMap::new();
    let mut breakdown = InteractionBreakdown {
        interactions: outcomes.len(),
        ..Default::default()
    };

    for o in outcomes {
        for abn in &labels {
            *counts.get_mut(abn).unwrap() += classify(o, *abn);
        }
        let samples = o.referral_samples(threshold)?;
        for s in &samples {
            let abn = s.abnormality.expect("referral samples carry a label");
            if s.accepted == Some(true) && o.misses.contains(abn) {
                tr_ru.entry(abn).or_default().push(s.value);
            }
        }
        let tu = total_usefulness(o, threshold)?;
        match tu.kind {
            SampleKind::ReferralBased => breakdown.referral_based += 1,
            SampleKind::DeferralBased if tu.value == 1.0 => {
                breakdown.deferral_based += 1;
                breakdown.correct_deferrals += 1;
            }
            SampleKind::DeferralBased => {
                breakdown.deferral_based += 1;
                breakdown.incorrect_deferrals += 1;
            }
        }
        ru_samples.extend(samples);
        tu_samples.push(tu);
    }

    let injected: u64 = counts.values().map(|c| c.tr + c.fd).sum();
    let injected_errors = match records {
        Some(records) => {
            let relevant = records.iter().filter(|r| labels.contains(&r.abnormality)).count();
            if relevant as u64 != injected {
                return Err(CoraxError::State(format!(
                    "TR + FD = {injected} but {relevant} errors were injected"
                )));
            }
            relevant
        }
        None => injected as usize,
    };

    let mut undefined = Vec::new();
    let per_label: Vec<LabelMetrics> = labels
        .iter()
        .map(|abn| {
            let c = counts[abn];
            let p = pecr(&c).ok();
            let d = oder(&c).ok();
            if p.is_none() {
                undefined.push(format!("pecr:{abn}"));
            }
            if d.is_none() {
                undefined.push(format!("oder:{abn}"));
            }
            LabelMetrics {
                abnormality: *abn,
                counts: c,
                pecr: p,
                oder: d,
                ru_true_referrals: Summary::of(tr_ru.get(abn).map_or(&[][..], |v| v.as_slice())),
            }
        })
        .collect();
    let total = counts.values().fold(ConfusionCounts::default(), |a, c| a + *c);
    let all_tr: Vec<f64> = labels
        .iter()
        .flat_map(|a| tr_ru.get(a).into_iter().flatten().copied())
        .collect();

    let ru_values: Vec<f64> = ru_samples.iter().map(|s| s.value).collect();
    let tu_values: Vec<f64> = tu_samples.iter().map(|s| s.value).collect();
    breakdown.referrals = ru_samples.len();
    breakdown.referrals_accepted = ru_samples.iter().filter(|s| s.accepted == Some(true)).count();
    breakdown.referrals_rejected = breakdown.referrals - breakdown.referrals_accepted;
    breakdown.referrals_ru_above_0_2 = ru_values.iter().filter(|v| **v > 0.2).count();
    breakdown.referrals_ru_zero = ru_values.iter().filter(|v| **v == 0.0).count();
    breakdown.interactions_tu_above_0_4 = tu_values.iter().filter(|v| **v > 0.4).count();
    if breakdown.interactions > 0 {
        let n = breakdown.interactions as f64;
        breakdown.fraction_referral_based = breakdown.referral_based as f64 / n;
        breakdown.fraction_correct_deferral = breakdown.correct_deferrals as f64 / n;
        breakdown.fraction_incorrect_deferral = breakdown.incorrect_deferrals as f64 / n;
    }

    Ok(MetricsReport {
        provenance,
        per_label,
        totals: LabelTotals {
            counts: total,
            pecr: pecr(&total).ok(),
            oder: oder(&total).ok(),
        },
        injected_errors,
        ru_true_referrals: Summary::of(&all_tr),
        breakdown,
        cdf_ru: cdf_points(&ru_values),
        cdf_tu: cdf_points(&tu_values),
        ru_samples,
        tu_samples,
        undefined,
    })
}
