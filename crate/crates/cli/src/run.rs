//! `corax run`: inject errors, analyze, review with the simulated oracle,
//! score.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use corax_core::bundle::load_dir;
use corax_core::error_sim::{ErrorRecord, ErrorSpec, inject_errors, misses_by_case, write_records_jsonl};
use corax_core::metrics::{CaseOutcome, MetricsReport, Provenance, build_report};
use corax_core::referral::{CaseAnalysis, review_with_oracle};
use corax_core::synthetic::cases_dir;
use corax_core::{CaseBundle, CoraxError, LabelSet};
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::config::Settings;
use crate::error::CliError;

pub const METRICS_FILE: &str = "metrics.json";
pub const CHECKSUM_FILE: &str = "metrics.sha256";
pub const RECORDS_FILE: &str = "error_records.jsonl";
pub const ANALYSES_FILE: &str = "analyses.jsonl";

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn load_cases(input: &Path) -> Result<Vec<CaseBundle>, CliError> {
    if !input.is_dir() {
        return Err(CliError::io(
            input,
            std::io::Error::new(std::io::ErrorKind::NotFound, "dataset directory not found"),
        ));
    }
    let cases = load_dir(&cases_dir(input))?;
    if cases.is_empty() {
        return Err(CliError::Usage(format!("no case bundles in {}", input.display())));
    }
    Ok(cases)
}

/// Digest of the dataset content, independent of where it lives on disk.
pub fn dataset_digest(cases: &[CaseBundle]) -> Result<String, CliError> {
    let mut h = Sha256::new();
    for c in cases {
        h.update(c.case_id.as_bytes());
        h.update(c.content_hash()?.as_bytes());
    }
    Ok(format!("sha256:{}", h.finalize().iter().map(|b| format!("{b:02x}")).collect::<String>()))
}

pub fn provenance(settings: &Settings, spec: &ErrorSpec, dataset: String) -> Provenance {
    Provenance {
        threshold_frac: settings.threshold_frac,
        error_seed: Some(spec.seed),
        dataset: Some(dataset),
        ..Provenance::for_pipeline(&settings.pipeline)
    }
}

pub struct RunOutput {
    pub report: MetricsReport,
    pub records: Vec<ErrorRecord>,
    pub analyses: Vec<CaseAnalysis>,
    pub checksum: String,
}

/// Analyzes and reviews every case, fanning out across the rayon pool.
pub fn evaluate(
    cases: &[CaseBundle],
    records: &[ErrorRecord],
    settings: &Settings,
) -> Result<Vec<CaseOutcome>, CoraxError> {
    let misses = misses_by_case(records);
    cases
        .par_iter()
        .map(|c| {
            let mut analysis = settings.pipeline.analyze_case(c)?;
            review_with_oracle(&mut analysis, &c.ground_truth.labels)?;
            Ok(CaseOutcome {
                analysis,
                ground_truth: c.ground_truth.clone(),
                misses: misses.get(&c.case_id).cloned().unwrap_or_else(LabelSet::new),
                dims: c.dims(),
            })
        })
        .collect()
}

pub fn execute(input: &Path, spec_path: &Path, out: &Path, settings: &Settings) -> Result<RunOutput, CliError> {
    let spec = ErrorSpec::load(spec_path).map_err(|e| match e {
        CoraxError::Io(source) => CliError::io(spec_path, source),
        CoraxError::Json(e) => CliError::Core(CoraxError::Specification(format!("{}: {e}", spec_path.display()))),
        other => other.into(),
    })?;
    let cases = load_cases(input)?;
    let (altered, records) = inject_errors(&cases, &spec, &settings.pipeline.labeler)?;
    let outcomes = evaluate(&altered, &records, settings)?;
    let report = build_report(&outcomes, Some(&records), provenance(settings, &spec, dataset_digest(&cases)?))?;
    let analyses: Vec<CaseAnalysis> = outcomes.into_iter().map(|o| o.analysis).collect();
    let checksum = write_outputs(out, &report, &records, &analyses)?;
    Ok(RunOutput {
        report,
        records,
        analyses,
        checksum,
    })
}

fn write(path: PathBuf, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    std::fs::write(&path, contents).map_err(|e| CliError::io(path, e))
}

/// Writes the metrics directory, the error records, the reviewed analyses
/// and the checksum of `metrics.json`. Returns the checksum.
pub fn write_outputs(
    out: &Path,
    report: &MetricsReport,
    records: &[ErrorRecord],
    analyses: &[CaseAnalysis],
) -> Result<String, CliError> {
    std::fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    report.write_dir(out).map_err(|e| match e {
        CoraxError::Io(source) => CliError::io(out, source),
        other => other.into(),
    })?;
    write(out.join(RECORDS_FILE), write_records_jsonl(records)?)?;
    let mut lines = String::new();
    for a in analyses {
        lines.push_str(&serde_json::to_string(a).map_err(CoraxError::from)?);
        lines.push('\n');
    }
    write(out.join(ANALYSES_FILE), lines)?;
    let json = report.to_json()?;
    let checksum = sha256_hex(json.as_bytes());
    write(out.join(CHECKSUM_FILE), format!("{checksum}  {METRICS_FILE}\n"))?;
    Ok(checksum)
}

fn read(path: PathBuf) -> Result<String, CliError> {
    std::fs::read_to_string(&path).map_err(|e| CliError::io(path, e))
}

/// Recomputes the report of a finished run from its analyses and error
/// records and compares the checksum with the stored one.
pub fn verify(input: &Path, out: &Path, settings: &Settings) -> Result<bool, CliError> {
    let records: Vec<ErrorRecord> = read(out.join(RECORDS_FILE))?
        .lines()
        .map(serde_json::from_str)
        .collect::<Result<_, _>>()
        .map_err(CoraxError::from)?;
    let mut analyses: BTreeMap<String, CaseAnalysis> = BTreeMap::new();
    for line in read(out.join(ANALYSES_FILE))?.lines() {
        let a: CaseAnalysis = serde_json::from_str(line).map_err(CoraxError::from)?;
        analyses.insert(a.case_id.clone(), a);
    }
    let stored: MetricsReport = serde_json::from_str(&read(out.join(METRICS_FILE))?).map_err(CoraxError::from)?;
    let cases = load_cases(input)?;
    let misses = misses_by_case(&records);
    let mut outcomes = Vec::with_capacity(cases.len());
    for c in &cases {
        let mut analysis = analyses
            .remove(&c.case_id)
            .ok_or_else(|| CoraxError::State(format!("no analysis for {}", c.case_id)))?;
        settings.pipeline.attach_rois(c, &mut analysis)?;
        outcomes.push(CaseOutcome {
            analysis,
            ground_truth: c.ground_truth.clone(),
            misses: misses.get(&c.case_id).cloned().unwrap_or_default(),
            dims: c.dims(),
        });
    }
    let rebuilt = build_report(&outcomes, Some(&records), stored.provenance.clone())?;
    let checksum = sha256_hex(rebuilt.to_json()?.as_bytes());
    let expected = read(out.join(CHECKSUM_FILE))?;
    Ok(expected.split_whitespace().next() == Some(checksum.as_str()))
}
