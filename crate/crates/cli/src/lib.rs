//! Library half of the `corax` binary: argument parsing, settings
//! resolution and the subcommand implementations.

pub mod config;
pub mod error;
pub mod gen;
pub mod report;
pub mod run;

use std::path::PathBuf;
use std::sync::Arc;

use clap::{Parser, Subcommand};

use crate::config::{FileConfig, PipelineArgs};
use crate::error::{CliError, EXIT_UNDEFINED_METRIC};
use crate::gen::PlanArg;
use crate::report::Format;

#[derive(Debug, Parser)]
#[command(name = "corax", version, about = "Gaze-grounded perceptual-miss referrals for chest X-ray reports")]
pub struct Cli {
    /// TOML file with default settings; flags and environment override it
    #[arg(long, global = true, env = "CORAX_CONFIG")]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic dataset of case bundles
    GenSynthetic {
        #[arg(long)]
        cases: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "reference")]
        plan: PlanArg,
        #[arg(long, default_value_t = 128)]
        image_size: usize,
    },
    /// Inject errors, analyze, review with the simulated oracle and score
    Run {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        error_spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        pipeline: PipelineArgs,
        /// Worker threads (default: all cores)
        #[arg(long, env = "CORAX_THREADS")]
        threads: Option<usize>,
    },
    /// Render a metrics file as a breakdown table
    Report {
        #[arg(long)]
        metrics: PathBuf,
        #[arg(long, value_enum, default_value = "md")]
        format: Format,
    },
    /// Serve the case store over HTTP
    Serve {
        #[arg(long, env = "CORAX_DATA_DIR")]
        data_dir: Option<PathBuf>,
        #[arg(long, env = "CORAX_PORT")]
        port: Option<u16>,
        /// Dataset directory to ingest before serving
        #[arg(long)]
        ingest: Option<PathBuf>,
        #[command(flatten)]
        pipeline: PipelineArgs,
    },
    /// Write the default anatomical prior atlas
    Atlas {
        #[arg(long)]
        out: PathBuf,
    },
}

/// Runs a parsed command, writing user-facing output to `out`. Returns the
/// process exit code for non-error outcomes.
pub fn execute(cli: Cli, out: &mut dyn std::io::Write) -> Result<i32, CliError> {
    let file = FileConfig::load(cli.config.as_deref())?;
    let stdout_err = |e: std::io::Error| CliError::io("<stdout>", e);
    match cli.command {
        Command::GenSynthetic {
            cases,
            seed,
            out: dir,
            plan,
            image_size,
        } => {
            let counts = gen::gen_synthetic(&dir, cases, seed, plan, image_size)?;
            writeln!(out, "wrote {cases} cases to {}", dir.display()).map_err(stdout_err)?;
            for (abn, n) in counts {
                writeln!(out, "{:<18} {n}", abn.display_name()).map_err(stdout_err)?;
            }
            Ok(0)
        }
        Command::Run {
            input,
            error_spec,
            out: dir,
            pipeline,
            threads,
        } => {
            let settings = pipeline.resolve(&file)?;
            let threads = threads.or(file.threads);
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads.unwrap_or(0))
                .build()
                .map_err(|e| CliError::Usage(e.to_string()))?;
            let result = pool.install(|| run::execute(&input, &error_spec, &dir, &settings))?;
            let r = &result.report;
            writeln!(
                out,
                "{} cases, {} injected errors, {} referrals; TR {} FD {} FR {} TD {}",
                r.breakdown.interactions,
                r.injected_errors,
                r.breakdown.referrals,
                r.totals.counts.tr,
                r.totals.counts.fd,
                r.totals.counts.fr,
                r.totals.counts.td
            )
            .map_err(stdout_err)?;
            writeln!(out, "metrics sha256 {}", result.checksum).map_err(stdout_err)?;
            if r.has_undefined() {
                writeln!(out, "undefined: {}", r.undefined.join(", ")).map_err(stdout_err)?;
                return Ok(EXIT_UNDEFINED_METRIC);
            }
            Ok(0)
        }
        Command::Report { metrics, format } => {
            let text = report::render_file(&metrics, format)?;
            out.write_all(text.as_bytes()).map_err(stdout_err)?;
            Ok(0)
        }
        Command::Atlas { out: dir } => {
            gen::write_atlas(&dir)?;
            writeln!(out, "wrote atlas to {}", dir.display()).map_err(stdout_err)?;
            Ok(0)
        }
        Command::Serve {
            data_dir,
            port,
            ingest,
            pipeline,
        } => {
            let settings = pipeline.resolve(&file)?;
            let data_dir = data_dir
                .or(file.data_dir)
                .unwrap_or_else(|| PathBuf::from("corax-data"));
            let port = port.or(file.port).unwrap_or(corax_service::DEFAULT_PORT);
            let store = Arc::new(corax_service::Store::open(&data_dir, settings.pipeline)?);
            if let Some(dir) = ingest {
                let created = gen::ingest_dir(&store, &dir)?;
                writeln!(out, "ingested {created} new cases from {}", dir.display()).map_err(stdout_err)?;
            }
            let runtime = tokio::runtime::Runtime::new().map_err(|e| CliError::io(&data_dir, e))?;
            runtime.block_on(corax_service::serve_store(
                store,
                std::net::SocketAddr::from(([127, 0, 0, 1], port)),
            ))?;
            Ok(0)
        }
    }
}
