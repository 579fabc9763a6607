//! Dataset and atlas generation, and bulk ingest into the case store.

use std::collections::BTreeMap;
use std::path::Path;

use clap::ValueEnum;
use corax_core::grounding::PriorAtlas;
use corax_core::synthetic::{PositivePlan, SyntheticConfig, generate, positive_counts, write_dataset};
use corax_core::{Abnormality, CoraxError};
use corax_service::Store;
use serde_json::json;

use crate::error::CliError;
use crate::run::{dataset_digest, load_cases};

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum PlanArg {
    /// Reference positive counts scaled to the dataset size
    Reference,
    /// Reference prevalences, every case with at least one finding
    AllPositive,
}

fn io_at(path: &Path) -> impl Fn(CoraxError) -> CliError + '_ {
    move |e| match e {
        CoraxError::Io(source) => CliError::io(path, source),
        other => other.into(),
    }
}

/// Writes the dataset and returns per-label positive counts.
pub fn gen_synthetic(
    out: &Path,
    cases: usize,
    seed: u64,
    plan: PlanArg,
    image_size: usize,
) -> Result<BTreeMap<Abnormality, usize>, CliError> {
    if cases == 0 {
        return Err(CliError::Usage("--cases must be at least 1".into()));
    }
    let plan = match plan {
        PlanArg::Reference => PositivePlan::Reference,
        PlanArg::AllPositive => PositivePlan::every_case_positive(),
    };
    let cfg = SyntheticConfig {
        image_size,
        ..SyntheticConfig::new(cases, seed).with_plan(plan)
    };
    let generated = generate(&cfg)?;
    write_dataset(out, &cfg, &generated).map_err(io_at(out))?;
    let bundles: Vec<_> = generated.into_iter().map(|c| c.bundle).collect();
    Ok(positive_counts(&bundles))
}

pub fn write_atlas(out: &Path) -> Result<(), CliError> {
    PriorAtlas::default().save_dir(out).map_err(io_at(out))
}

/// Loads a dataset directory into the store with embedded images. Returns
/// the number of newly created cases.
pub fn ingest_dir(store: &Store, input: &Path) -> Result<usize, CliError> {
    let cases = load_cases(input)?;
    let mut created = 0;
    for c in &cases {
        if store.ingest(c.to_embedded_file()?)?.created {
            created += 1;
        }
    }
    store.record_dataset(json!({
        "source": input.display().to_string(),
        "cases": cases.len(),
        "created": created,
        "dataset": dataset_digest(&cases)?,
    }))?;
    Ok(created)
}
