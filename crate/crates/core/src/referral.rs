//! Referral engine: Set A vs Set B, grounding of the difference, ROI
//! construction, and the accept/reject state machine.

use serde::{Deserialize, Serialize};

use crate::bundle::CaseBundle;
use crate::error::{CoraxError, Result};
use crate::gaze::{self, HeatmapFrame, GazeVideo};
use crate::grounding::{
    self, DEFAULT_STRIDE_MS, DEFAULT_TRANSCRIPT_PAD_MS, DEFAULT_WINDOW_MS, GroundedFinding,
    PriorAtlas,
};
use crate::labeler::Labeler;
use crate::labels::{Abnormality, LabelSet};
use crate::oracle::{self, OracleBackend};

#[derive(Copy, Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoiMode {
    #[default]
    Mean,
    Static,
}

impl RoiMode {
    pub fn as_str(self) -> &'static str {
        match self {
            RoiMode::Mean => "mean",
            RoiMode::Static => "static",
        }
    }
}

impl std::str::FromStr for RoiMode {
    type Err = CoraxError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(RoiMode::Mean),
            "static" => Ok(RoiMode::Static),
            _ => Err(CoraxError::Parameter(format!("roi mode must be mean|static, got `{s}`"))),
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReviewStatus {
    Pending,
    Accepted,
    Rejected,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Accept,
    Reject,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Actor {
    Human,
    SimulatedOracle,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Referral {
    pub referral_id: String,
    pub case_id: String,
    pub abnormality: Abnormality,
    pub interval: (u64, u64),
    pub roi_mode: RoiMode,
    pub status: ReviewStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decided_by: Option<Actor>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iou: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub roi_path: Option<String>,
    /// Materialized ROI; not serialized, rebuilt from the case on demand.
    #[serde(skip)]
    pub roi: Option<HeatmapFrame>,
}

pub fn referral_id(case_id: &str, abn: Abnormality) -> String {
    format!("{case_id}--{}", abn.slug())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaseAnalysis {
    pub case_id: String,
    pub set_a: LabelSet,
    pub set_b: LabelSet,
    pub grounded: Vec<GroundedFinding>,
    pub referrals: Vec<Referral>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl CaseAnalysis {
    pub fn missed(&self) -> LabelSet {
        missed_abnormalities(&self.set_a, &self.set_b)
    }

    /// Every referral targets a label in `set_b ∖ set_a`, at most once.
    pub fn check_invariants(&self) -> Result<()> {
        let missed = self.missed();
        let mut seen = LabelSet::new();
        for r in &self.referrals {
            if !missed.contains(r.abnormality) || !seen.insert(r.abnormality) {
                return Err(CoraxError::State(format!(
                    "referral {} targets {} outside Set B minus Set A",
                    r.referral_id, r.abnormality
                )));
            }
        }
        Ok(())
    }

    pub fn is_deferral(&self) -> bool {
        self.referrals.is_empty()
    }

    pub fn all_decided(&self) -> bool {
        self.referrals.iter().all(|r| r.status != ReviewStatus::Pending)
    }
}

/// `set_b ∖ set_a`; labels asserted only in the report are ignored.
pub fn missed_abnormalities(set_a: &LabelSet, set_b: &LabelSet) -> LabelSet {
    set_b.difference(set_a)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GrounderConfig {
    Dwell {
        #[serde(default = "default_window")]
        window_ms: u64,
        #[serde(default = "default_stride")]
        stride_ms: u64,
    },
    Transcript {
        #[serde(default = "default_pad")]
        pad_ms: u64,
    },
}

fn default_window() -> u64 {
    DEFAULT_WINDOW_MS
}
fn default_stride() -> u64 {
    DEFAULT_STRIDE_MS
}
fn default_pad() -> u64 {
    DEFAULT_TRANSCRIPT_PAD_MS
}

impl GrounderConfig {
    pub fn dwell() -> Self {
        GrounderConfig::Dwell {
            window_ms: DEFAULT_WINDOW_MS,
            stride_ms: DEFAULT_STRIDE_MS,
        }
    }

    pub fn transcript() -> Self {
        GrounderConfig::Transcript {
            pad_ms: DEFAULT_TRANSCRIPT_PAD_MS,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            GrounderConfig::Dwell { .. } => "dwell",
            GrounderConfig::Transcript { .. } => "transcript",
        }
    }
}

/// Everything `analyze_case` needs besides the case itself.
#[derive(Clone, Debug)]
pub struct Pipeline {
    pub labeler: Labeler,
    pub atlas: PriorAtlas,
    pub oracle: OracleBackend,
    pub grounder: GrounderConfig,
    pub roi_mode: RoiMode,
    /// Kernel width override; `None` uses 1/32 of the image width.
    pub sigma_px: Option<f64>,
}

impl Default for Pipeline {
    fn default() -> Self {
        Pipeline {
            labeler: Labeler::default(),
            atlas: PriorAtlas::default(),
            oracle: OracleBackend::GroundTruth,
            grounder: GrounderConfig::transcript(),
            roi_mode: RoiMode::Mean,
            sigma_px: None,
        }
    }
}

impl Pipeline {
    pub fn sigma_for(&self, width: usize) -> f64 {
        self.sigma_px.unwrap_or_else(|| gaze::default_sigma(width))
    }

    pub fn vocabulary(&self) -> Vec<Abnormality> {
        self.labeler.vocabulary().collect()
    }

    pub fn ground(&self, case: &CaseBundle, labels: &LabelSet) -> Result<Vec<GroundedFinding>> {
        match &self.grounder {
            GrounderConfig::Dwell {
                window_ms,
                stride_ms,
            } => grounding::ground_by_dwell(labels, &case.scanpath, &self.atlas, *window_ms, *stride_ms),
            GrounderConfig::Transcript { pad_ms } => {
                let words = case.transcript.as_deref().ok_or_else(|| {
                    CoraxError::Config(format!("case {} has no transcript", case.case_id))
                })?;
                grounding::ground_by_transcript(
                    labels,
                    words,
                    &self.labeler,
                    *pad_ms,
                    case.scanpath.total_duration_ms,
                )
            }
        }
    }

    /// Region of interest for an interval, at the case image resolution.
    pub fn build_roi(
        &self,
        case: &CaseBundle,
        interval: (u64, u64),
        mode: RoiMode,
        video: Option<&GazeVideo>,
    ) -> Result<HeatmapFrame> {
        let (w, h) = case.dims();
        let sigma = self.sigma_for(w);
        match mode {
            RoiMode::Mean => match video {
                Some(v) => gaze::roi_mean_image(v, interval.0, interval.1),
                None => {
                    // only intersecting fixations contribute to the mean
                    let mut scan = case.scanpath.clone();
                    scan.fixations.retain(|f| f.intersects(interval.0, interval.1));
                    if scan.fixations.is_empty() {
                        return Err(CoraxError::EmptySelection(format!(
                            "no frame intersects [{}, {}]",
                            interval.0, interval.1
                        )));
                    }
                    let v = gaze::build_gaze_video(&scan, w, h, sigma)?;
                    gaze::roi_mean_image(&v, interval.0, interval.1)
                }
            },
            RoiMode::Static => {
                gaze::roi_static_heatmap(&case.scanpath, interval.0, interval.1, w, h, sigma)
            }
        }
    }

    pub fn analyze_case(&self, case: &CaseBundle) -> Result<CaseAnalysis> {
        self.analyze_case_with(case, self.roi_mode)
    }

    pub fn analyze_case_with(&self, case: &CaseBundle, roi_mode: RoiMode) -> Result<CaseAnalysis> {
        let set_a = self.labeler.extract_labels(&case.report)?;
        let set_b = oracle::corrected_labels(case, &self.oracle, &self.atlas, &self.vocabulary())?;
        let grounded = self.ground(case, &set_b)?;
        let missed = missed_abnormalities(&set_a, &set_b);

        let mut warnings = Vec::new();
        let mut referrals = Vec::new();
        let video = if roi_mode == RoiMode::Mean && !missed.is_empty() && !case.scanpath.fixations.is_empty() {
            let (w, h) = case.dims();
            Some(gaze::build_gaze_video(&case.scanpath, w, h, self.sigma_for(w))?)
        } else {
            None
        };
        for abn in missed.iter() {
            let Some(g) = grounded.iter().find(|g| g.abnormality == abn) else {
                warnings.push(format!("{abn}: grounder abstained, no referral"));
                continue;
            };
            let interval = (g.t_start_ms, g.t_end_ms);
            match self.build_roi(case, interval, roi_mode, video.as_ref()) {
                Ok(roi) => referrals.push(Referral {
                    referral_id: referral_id(&case.case_id, abn),
                    case_id: case.case_id.clone(),
                    abnormality: abn,
                    interval,
                    roi_mode,
                    status: ReviewStatus::Pending,
                    decided_by: None,
                    iou: None,
                    roi_path: None,
                    roi: Some(roi),
                }),
                Err(e) => warnings.push(format!("{abn}: ROI not built: {e}")),
            }
        }
        let analysis = CaseAnalysis {
            case_id: case.case_id.clone(),
            set_a,
            set_b,
            grounded,
            referrals,
            warnings,
        };
        analysis.check_invariants()?;
        Ok(analysis)
    }
}

impl Pipeline {
    /// Rebuilds the ROIs of a deserialized analysis.
    pub fn attach_rois(&self, case: &CaseBundle, analysis: &mut CaseAnalysis) -> Result<()> {
        for r in analysis.referrals.iter_mut().filter(|r| r.roi.is_none()) {
            r.roi = Some(self.build_roi(case, r.interval, r.roi_mode, None)?);
        }
        Ok(())
    }
}

/// Pending → Accepted | Rejected; any other transition is a state error.
pub fn decide(referral: &Referral, decision: Decision, actor: Actor) -> Result<Referral> {
    if referral.status != ReviewStatus::Pending {
        return Err(CoraxError::State(format!(
            "referral {} is already {:?}",
            referral.referral_id, referral.status
        )));
    }
    let mut out = referral.clone();
    out.status = match decision {
        Decision::Accept => ReviewStatus::Accepted,
        Decision::Reject => ReviewStatus::Rejected,
    };
    out.decided_by = Some(actor);
    Ok(out)
}

/// Simulated reviewer: accepts exactly the labels that are true misses
/// (`ground_truth ∖ set_a`), whatever the ROI looks like.
pub fn simulated_decision(referral: &Referral, ground_truth: &LabelSet, set_a: &LabelSet) -> Decision {
    if ground_truth.difference(set_a).contains(referral.abnormality) {
        Decision::Accept
    } else {
        Decision::Reject
    }
}

/// Applies the simulated reviewer to every pending referral of an analysis.
pub fn review_with_oracle(analysis: &mut CaseAnalysis, ground_truth: &LabelSet) -> Result<()> {
    for r in analysis.referrals.iter_mut() {
        if r.status == ReviewStatus::Pending {
            let d = simulated_decision(r, ground_truth, &analysis.set_a);
            *r = decide(r, d, Actor::SimulatedOracle)?;
        }
    }
    Ok(())
}
