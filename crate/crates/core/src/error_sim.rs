//! Simulated perceptual errors: findings masked out of, or negated in,
//! otherwise correct reports.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bundle::CaseBundle;
use crate::error::{CoraxError, Result};
use crate::labeler::{Labeler, Report, join_sentence};
use crate::labels::{Abnormality, LabelSet};

/// Inserted when masking would leave a report with no sentences.
pub const EMPTY_REPORT_FILLER: &str = "no acute cardiopulmonary process.";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorSpec {
    pub rates: BTreeMap<Abnormality, f64>,
    pub seed: u64,
    /// Probability that an alteration negates rather than masks.
    #[serde(default = "half")]
    pub mode_mix: f64,
}

fn half() -> f64 {
    0.5
}

impl ErrorSpec {
    pub fn none(seed: u64) -> Self {
        ErrorSpec {
            rates: BTreeMap::new(),
            seed,
            mode_mix: 0.5,
        }
    }

    /// Per-label error counts and positive-case denominators of the
    /// reference test set, as exact fractions.
    pub fn reference_counts() -> [(Abnormality, usize, usize); 5] {
        [
            (Abnormality::Cardiomegaly, 10, 65),
            (Abnormality::PleuralEffusion, 15, 65),
            (Abnormality::Atelectasis, 23, 54),
            (Abnormality::LungOpacity, 26, 94),
            (Abnormality::Edema, 19, 54),
        ]
    }

    pub fn reference(seed: u64) -> Self {
        ErrorSpec {
            rates: Self::reference_counts()
                .into_iter()
                .map(|(a, k, n)| (a, k as f64 / n as f64))
                .collect(),
            seed,
            mode_mix: 0.5,
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let spec: ErrorSpec = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        for (abn, rate) in &self.rates {
            if !(0.0..=1.0).contains(rate) {
                return Err(CoraxError::Specification(format!(
                    "rate for {abn} is {rate}, outside [0, 1]"
                )));
            }
        }
        if !(0.0..=1.0).contains(&self.mode_mix) {
            return Err(CoraxError::Specification(format!(
                "mode_mix {} outside [0, 1]",
                self.mode_mix
            )));
        }
        Ok(())
    }

    /// Alterations requested for `positives` positive cases.
    pub fn count_for(&self, abn: Abnormality, positives: usize) -> usize {
        let rate = self.rates.get(&abn).copied().unwrap_or(0.0);
        (rate * positives as f64).round() as usize
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorMode {
    Mask,
    Negate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorRecord {
    pub case_id: String,
    pub abnormality: Abnormality,
    pub mode: ErrorMode,
    /// Byte span of the first mentioning sentence in the pre-alteration text.
    pub original_sentence_span: (usize, usize),
    pub altered_text: String,
}

/// Removes (Mask) or negates (Negate) every positive mention of `abn`.
/// Other labels lost as collateral (shared sentences) are restored by
/// appending their canonical sentences.
pub fn alter_report(
    labeler: &Labeler,
    report: &Report,
    abn: Abnormality,
    mode: ErrorMode,
) -> Result<(Report, (usize, usize))> {
    let before = labeler.extract_labels(report)?;
    let mut hit: Vec<usize> = labeler
        .mentions(report)
        .into_iter()
        .filter(|m| m.abnormality == abn && !m.negated)
        .map(|m| m.sentence)
        .collect();
    hit.sort_unstable();
    hit.dedup();
    let Some(&first) = hit.first() else {
        return Err(CoraxError::Specification(format!(
            "case {} has no positive mention of {abn}",
            report.case_id
        )));
    };
    let canonical = labeler
        .dictionary()
        .canonical_phrase(abn)
        .ok_or_else(|| CoraxError::Config(format!("{abn} is not in the phrase dictionary")))?;
    let negation = format!("no {canonical}.");

    let spans = &report.sentences;
    let mut text = report.text[..spans[0].start].to_string();
    for (i, span) in spans.iter().enumerate() {
        let gap_end = spans.get(i + 1).map_or(report.text.len(), |s| s.start);
        let gap = &report.text[span.end..gap_end];
        if i == first && mode == ErrorMode::Negate {
            text.push_str(&negation);
            text.push_str(gap);
        } else if !hit.contains(&i) {
            text.push_str(&report.text[span.clone()]);
            text.push_str(gap);
        }
    }
    let mut text = text.trim_end().to_string();
    if text.trim().is_empty() {
        text = EMPTY_REPORT_FILLER.to_string();
    }

    let mut altered = Report::new(report.case_id.clone(), text);
    let after = labeler.extract_labels(&altered)?;
    for lost in before.difference(&after).iter().filter(|a| *a != abn) {
        let phrase = labeler
            .dictionary()
            .canonical_phrase(lost)
            .expect("extracted labels come from the dictionary");
        altered = Report::new(
            report.case_id.clone(),
            join_sentence(&altered.text, &format!("{phrase}.")),
        );
    }
    if labeler.extract_labels(&altered)?.contains(abn) {
        return Err(CoraxError::Specification(format!(
            "could not remove {abn} from case {}",
            report.case_id
        )));
    }
    Ok((altered, (spans[first].start, spans[first].end)))
}

/// Applies `spec` to the cases. For each abnormality with `n` positive cases,
/// `round(rate * n)` of them are drawn uniformly without replacement and
/// altered; draws are independent across abnormalities, so one case can lose
/// several findings.
pub fn inject_errors(
    cases: &[CaseBundle],
    spec: &ErrorSpec,
    labeler: &Labeler,
) -> Result<(Vec<CaseBundle>, Vec<ErrorRecord>)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut out = cases.to_vec();
    let mut records = Vec::new();
    for &abn in spec.rates.keys() {
        let positives: Vec<usize> = (0..cases.len())
            .filter(|&i| cases[i].ground_truth.labels.contains(abn))
            .collect();
        let k = spec.count_for(abn, positives.len());
        if k > positives.len() {
            return Err(CoraxError::Specification(format!(
                "{k} alterations requested for {abn} but only {} positive cases",
                positives.len()
            )));
        }
        let mut chosen: Vec<usize> = index::sample(&mut rng, positives.len(), k)
            .into_iter()
            .map(|j| positives[j])
            .collect();
        chosen.sort_unstable();
        for i in chosen {
            let mode = if rng.random::<f64>() < spec.mode_mix {
                ErrorMode::Negate
            } else {
                ErrorMode::Mask
            };
            let (altered, span) = alter_report(labeler, &out[i].report, abn, mode)?;
            records.push(ErrorRecord {
                case_id: out[i].case_id.clone(),
                abnormality: abn,
                mode,
                original_sentence_span: span,
                altered_text: altered.text.clone(),
            });
            out[i].report = altered;
        }
    }
    Ok((out, records))
}

/// Every recorded abnormality is absent from the altered report and present
/// in ground truth.
pub fn verify_injection(altered: &CaseBundle, records: &[ErrorRecord], labeler: &Labeler) -> bool {
    let Ok(labels) = labeler.extract_labels(&altered.report) else {
        return false;
    };
    records
        .iter()
        .filter(|r| r.case_id == altered.case_id)
        .all(|r| !labels.contains(r.abnormality) && altered.ground_truth.labels.contains(r.abnormality))
}

/// Injected misses per case.
pub fn misses_by_case(records: &[ErrorRecord]) -> BTreeMap<String, LabelSet> {
    let mut out: BTreeMap<String, LabelSet> = BTreeMap::new();
    for r in records {
        out.entry(r.case_id.clone()).or_default().insert(r.abnormality);
    }
    out
}

pub fn write_records_jsonl(records: &[ErrorRecord]) -> Result<String> {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r)?);
        out.push('\n');
    }
    Ok(out)
}
