//! Abnormality oracles producing the corrected label set.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::bundle::CaseBundle;
use crate::error::Result;
use crate::grounding::{PriorAtlas, dwell_fraction};
use crate::labels::{Abnormality, LabelSet};

pub const DEFAULT_DWELL_THRESHOLD: f64 = 0.15;

/// Backend selection as written in the pipeline config.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OracleBackend {
    /// Returns the case's ground-truth labels.
    GroundTruth,
    /// Labels whose prior dwell fraction reaches a threshold.
    PriorDwell {
        #[serde(default = "default_threshold")]
        threshold: f64,
        #[serde(default)]
        thresholds: BTreeMap<Abnormality, f64>,
    },
}

fn default_threshold() -> f64 {
    DEFAULT_DWELL_THRESHOLD
}

impl OracleBackend {
    pub fn prior_dwell() -> Self {
        OracleBackend::PriorDwell {
            threshold: DEFAULT_DWELL_THRESHOLD,
            thresholds: BTreeMap::new(),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            OracleBackend::GroundTruth => "ground_truth",
            OracleBackend::PriorDwell { .. } => "prior_dwell",
        }
    }
}

/// Corrected label set (Set B before grounding). `vocabulary` bounds the
/// labels the prior-dwell backend may emit.
pub fn corrected_labels(
    case: &CaseBundle,
    backend: &OracleBackend,
    atlas: &PriorAtlas,
    vocabulary: &[Abnormality],
) -> Result<LabelSet> {
    match backend {
        OracleBackend::GroundTruth => Ok(case.ground_truth.labels.clone()),
        OracleBackend::PriorDwell {
            threshold,
            thresholds,
        } => {
            let mut out = LabelSet::new();
            for &abn in vocabulary {
                let prior = atlas.get(abn)?;
                let cut = thresholds.get(&abn).copied().unwrap_or(*threshold);
                if dwell_fraction(&case.scanpath, prior) >= cut {
                    out.insert(abn);
                }
            }
            Ok(out)
        }
    }
}
