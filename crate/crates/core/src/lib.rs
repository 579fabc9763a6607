//! Gaze-grounded review of radiology reports.
//!
//! A case pairs a chest image with a report, a word-aligned dictation and an
//! eye-tracking scanpath. The pipeline labels the report, asks an oracle for
//! the findings that should be there, grounds each missed finding to a slice
//! of the reading session, and refers it with a gaze region for review.

pub mod bundle;
pub mod error;
pub mod error_sim;
pub mod gaze;
pub mod grounding;
pub mod imageio;
pub mod labeler;
pub mod labels;
pub mod metrics;
pub mod oracle;
pub mod referral;
pub mod stats;
pub mod synthetic;

pub use bundle::{CaseBundle, CaseBundleFile, GroundTruth};
pub use error::{CoraxError, Result};
pub use labeler::{Labeler, Report};
pub use labels::{Abnormality, LabelSet};
pub use referral::{CaseAnalysis, Pipeline, Referral};
