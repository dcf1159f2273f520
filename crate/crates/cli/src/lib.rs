//! Batch front end for `vessel-core`: configuration, the per-image pipeline,
//! plots and built-in self-checks.
//!
//! Exit codes: 0 success, 1 when any input or check failed, 2 for a bad
//! configuration or command line.

pub mod config;
pub mod pipeline;
pub mod plots;
pub mod selftest;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use config::{ConfigError, Format, PipelineConfig};
pub use pipeline::{run_pipeline, ImageReport, Outputs, RunReport};
pub use selftest::{selftest, SelfTestReport};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILED: i32 = 1;
pub const EXIT_BAD_CONFIG: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "vesselkit", version, about = "Vessel skeleton, tortuosity and agreement tools")]
pub struct Cli {
    /// Flat `key = value` configuration file; flags override it.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_name = "N")]
    pub min_spur: Option<usize>,
    #[arg(long, global = true, value_name = "N")]
    pub min_component: Option<usize>,
    #[arg(long, global = true, value_name = "M")]
    pub harmonics: Option<usize>,
    #[arg(long, global = true, value_name = "N")]
    pub workers: Option<usize>,
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,
    #[arg(long, global = true, value_parser = ["json", "csv"])]
    pub format: Option<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Enhance colour fundus images and write grey and mask PGMs.
    Preprocess { inputs: Vec<PathBuf> },
    /// Thin vessel masks to one-pixel skeletons.
    Skeletonize { inputs: Vec<PathBuf> },
    /// Write the pruned skeleton graph of each mask as JSON.
    Graph { inputs: Vec<PathBuf> },
    /// Track vessels and write per-vessel metrics and a run report.
    Analyze { inputs: Vec<PathBuf> },
    /// Cohen's kappa of a rater confusion matrix CSV.
    Kappa { csv: PathBuf },
    /// Run the built-in numerical checks and print a JSON table.
    Selftest,
    /// Analyze, then draw per-vessel charts and a tortuosity histogram.
    Plot { inputs: Vec<PathBuf> },
}

/// Merge the config file, flags and positional inputs.
pub fn resolve_config(cli: &Cli) -> Result<PipelineConfig, ConfigError> {
    let mut cfg = match &cli.config {
        Some(path) => PipelineConfig::from_file(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(v) = &cli.out {
        cfg.out = v.clone();
    }
    if let Some(v) = cli.min_spur {
        cfg.min_spur = v;
    }
    if let Some(v) = cli.min_component {
        cfg.min_component = v;
    }
    if let Some(v) = cli.harmonics {
        cfg.harmonics = v;
    }
    if let Some(v) = cli.workers {
        cfg.workers = v;
    }
    if let Some(v) = cli.seed {
        cfg.seed = v;
    }
    if let Some(v) = &cli.format {
        cfg.set("format", v)?;
    }
    match &cli.command {
        Command::Preprocess { inputs }
        | Command::Skeletonize { inputs }
        | Command::Graph { inputs }
        | Command::Analyze { inputs }
        | Command::Plot { inputs }
            if !inputs.is_empty() =>
        {
            cfg.inputs = inputs.clone()
        }
        _ => {}
    }
    cfg.validate()?;
    Ok(cfg)
}

fn batch(cfg: &PipelineConfig, outputs: Outputs) -> i32 {
    match run_pipeline(cfg, outputs) {
        Ok(report) => {
            for im in &report.images {
                match &im.error {
                    Some(e) => eprintln!("{}: failed: {e}", im.input),
                    None => eprintln!("{}: {} vessels", im.input, im.vessel_count),
                }
            }
            if report.failed > 0 {
                EXIT_FAILED
            } else {
                EXIT_OK
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            EXIT_FAILED
        }
    }
}

fn kappa(path: &PathBuf) -> i32 {
    use vessel_core::metrics::{accuracy, cohen_kappa, ConfusionMatrix};
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("{}: {e}", path.display());
            return EXIT_FAILED;
        }
    };
    let result = ConfusionMatrix::from_csv(&text).and_then(|m| Ok((cohen_kappa(&m)?, accuracy(&m)?)));
    match result {
        Ok((stats, acc)) => {
            let mut v = serde_json::to_value(stats).expect("stats serialize");
            v["accuracy"] = acc.into();
            println!("{}", serde_json::to_string_pretty(&v).expect("json"));
            EXIT_OK
        }
        Err(e) => {
            eprintln!("{}: {e}", path.display());
            EXIT_FAILED
        }
    }
}

/// Parse `args` and run; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_BAD_CONFIG } else { EXIT_OK };
        }
    };
    let cfg = match resolve_config(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_BAD_CONFIG;
        }
    };
    match &cli.command {
        Command::Preprocess { .. } => batch(&cfg, Outputs::Preprocess),
        Command::Skeletonize { .. } => batch(&cfg, Outputs::Skeleton),
        Command::Graph { .. } => batch(&cfg, Outputs::Graph),
        Command::Analyze { .. } => batch(&cfg, Outputs::Analyze),
        Command::Plot { .. } => batch(&cfg, Outputs::Plot),
        Command::Kappa { csv } => kappa(csv),
        Command::Selftest => {
            let report = selftest(&cfg);
            println!("{}", report.to_json());
            if report.passed {
                EXIT_OK
            } else {
                EXIT_FAILED
            }
        }
    }
}
