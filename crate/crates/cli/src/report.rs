//! Renders a `metrics.json` as a per-abnormality breakdown table plus
//! usefulness summary lines.

use std::fmt::Write as _;
use std::path::Path;

use clap::ValueEnum;
use corax_core::metrics::{ConfusionCounts, MetricsReport, Summary, oder, pecr};

use crate::error::CliError;

pub const NO_DATA: &str = "no data";

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Md,
    Csv,
}

/// One table row. Rates are recomputed from the counts so that the table is
/// self-consistent even for hand-edited inputs.
#[derive(Clone, Debug, PartialEq)]
pub struct Row {
    pub name: String,
    pub counts: ConfusionCounts,
    pub pecr: Option<f64>,
    pub oder: Option<f64>,
}

impl Row {
    fn new(name: impl Into<String>, counts: ConfusionCounts) -> Self {
        Row {
            name: name.into(),
            counts,
            pecr: pecr(&counts).ok(),
            oder: oder(&counts).ok(),
        }
    }
}

pub fn rows(report: &MetricsReport) -> Vec<Row> {
    let mut out: Vec<Row> = report
        .per_label
        .iter()
        .map(|l| Row::new(l.abnormality.display_name(), l.counts))
        .collect();
    out.push(Row::new("Total", report.totals.counts));
    out
}

fn rate(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| format!("{x:.4}"))
}

fn summary(s: &Summary) -> Vec<(String, String)> {
    vec![
        ("mean".into(), rate(s.mean)),
        ("ci_lower".into(), rate(s.ci.as_ref().map(|c| c.lower))),
        ("ci_upper".into(), rate(s.ci.as_ref().map(|c| c.upper))),
        ("n".into(), s.n.to_string()),
    ]
}

/// Usefulness summary lines shared by both output formats.
pub fn summary_entries(report: &MetricsReport) -> Vec<(String, String)> {
    let mut out = Vec::new();
    for (k, v) in summary(&report.ru_true_referrals) {
        out.push((format!("ru_true_referrals.{k}"), v));
    }
    for l in &report.per_label {
        for (k, v) in summary(&l.ru_true_referrals) {
            out.push((format!("ru_true_referrals.{}.{k}", l.abnormality.slug()), v));
        }
    }
    let b = &report.breakdown;
    let counts = [
        ("referrals", b.referrals),
        ("referrals_accepted", b.referrals_accepted),
        ("referrals_rejected", b.referrals_rejected),
        ("referrals_ru_above_0_2", b.referrals_ru_above_0_2),
        ("referrals_ru_zero", b.referrals_ru_zero),
        ("interactions", b.interactions),
        ("interactions_tu_above_0_4", b.interactions_tu_above_0_4),
        ("referral_based", b.referral_based),
        ("correct_deferrals", b.correct_deferrals),
        ("incorrect_deferrals", b.incorrect_deferrals),
    ];
    out.extend(counts.into_iter().map(|(k, v)| (k.to_string(), v.to_string())));
    let fractions = [
        ("fraction_referral_based", b.fraction_referral_based),
        ("fraction_correct_deferral", b.fraction_correct_deferral),
        ("fraction_incorrect_deferral", b.fraction_incorrect_deferral),
    ];
    out.extend(fractions.into_iter().map(|(k, v)| (k.to_string(), rate(Some(v)))));
    out
}

/// True when the report describes no interactions at all.
pub fn is_empty(report: &MetricsReport) -> bool {
    report.breakdown.interactions == 0 && report.per_label.iter().all(|l| {
        let c = l.counts;
        c.tr + c.fd + c.fr + c.td == 0
    })
}

pub fn render(report: &MetricsReport, format: Format) -> String {
    if is_empty(report) {
        return format!("{NO_DATA}\n");
    }
    match format {
        Format::Md => markdown(report),
        Format::Csv => csv(report),
    }
}

fn markdown(report: &MetricsReport) -> String {
    let mut out = String::new();
    out.push_str("| Abnormality | TR | FD | PECR (%) | FR | TD | ODER (%) |\n");
    out.push_str("|---|---:|---:|---:|---:|---:|---:|\n");
    for r in rows(report) {
        let c = r.counts;
        let _ = writeln!(
            out,
            "| {} | {} | {} | {} | {} | {} | {} |",
            r.name,
            c.tr,
            c.fd,
            rate(r.pecr),
            c.fr,
            c.td,
            rate(r.oder)
        );
    }
    out.push('\n');
    for (k, v) in summary_entries(report) {
        let _ = writeln!(out, "- {k}: {v}");
    }
    out
}

fn csv(report: &MetricsReport) -> String {
    let mut out = String::from("abnormality,tr,fd,pecr,fr,td,oder\n");
    for r in rows(report) {
        let c = r.counts;
        let _ = writeln!(out, "{},{},{},{},{},{},{}", r.name, c.tr, c.fd, rate(r.pecr), c.fr, c.td, rate(r.oder));
    }
    out.push_str("\nmetric,value\n");
    for (k, v) in summary_entries(report) {
        let _ = writeln!(out, "{k},{v}");
    }
    out
}

/// Reads and renders a metrics file. An empty file renders as "no data".
pub fn render_file(path: &Path, format: Format) -> Result<String, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    if text.trim().is_empty() {
        return Ok(format!("{NO_DATA}\n"));
    }
    let report: MetricsReport = serde_json::from_str(&text)
        .map_err(|e| CliError::Usage(format!("{}: not a metrics report: {e}", path.display())))?;
    Ok(render(&report, format))
}
