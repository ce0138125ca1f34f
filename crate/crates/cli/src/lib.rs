//! Command-line experiment runner for `cesgeo`.
//!
//! Subcommands `crb-sim`, `classify-sim`, `estimate` and `mean` each read a
//! TOML config (`--config`); `--seed` and `--out` override the config, and
//! `--quiet` silences the console summary. Data goes to files only, the
//! summary to standard output, diagnostics to standard error.

pub mod config;
pub mod experiments;
pub mod formats;

use std::io::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

pub use experiments::{build_toeplitz_scatter, Outcome};

#[derive(Debug, Parser)]
#[command(
    name = "cesgeo",
    version,
    about = "CES scatter estimation, intrinsic bounds and MDM experiments"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Monte-Carlo MSE of scatter estimators against intrinsic Cramér-Rao bounds.
    CrbSim(SimArgs),
    /// Minimum-distance-to-mean classification on synthetic batches.
    ClassifySim(SimArgs),
    /// Estimate the scatter matrix of a batch file.
    Estimate(CommonArgs),
    /// Karcher mean of a file of HPD matrices.
    Mean(CommonArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// TOML config file; defaults are used when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides the config output path.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Suppress the console summary.
    #[arg(long)]
    pub quiet: bool,
}

#[derive(Debug, Args)]
pub struct SimArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Worker threads (0 = all cores). Output does not depend on it.
    #[arg(long)]
    pub workers: Option<usize>,
}

impl Command {
    pub fn common(&self) -> &CommonArgs {
        match self {
            Command::CrbSim(a) | Command::ClassifySim(a) => &a.common,
            Command::Estimate(a) | Command::Mean(a) => a,
        }
    }
}

/// Runs a subcommand without writing anything.
///
/// Relative paths inside a config file resolve against the config's
/// directory; `--out` resolves against the working directory.
pub fn execute(command: &Command) -> Result<Outcome> {
    let common = command.common();
    let path = common.config.as_deref();
    let cli_out = common.out.clone().map(absolute).transpose()?;
    match command {
        Command::CrbSim(args) => {
            let mut c: config::CrbSimConfig = config::load(path)?;
            c.seed = common.seed.unwrap_or(c.seed);
            c.out = cli_out.or(c.out);
            c.workers = args.workers.unwrap_or(c.workers);
            experiments::run_crb_sim(&c, path)
        }
        Command::ClassifySim(args) => {
            let mut c: config::ClassifySimConfig = config::load(path)?;
            c.seed = common.seed.unwrap_or(c.seed);
            c.out = cli_out.or(c.out);
            c.workers = args.workers.unwrap_or(c.workers);
            experiments::run_classify_sim(&c, path)
        }
        Command::Estimate(_) => {
            let mut c: config::EstimateConfig = config::load(path)?;
            c.seed = common.seed.unwrap_or(c.seed);
            c.out = cli_out.or(c.out);
            experiments::run_estimate(&c, path)
        }
        Command::Mean(_) => {
            let mut c: config::MeanConfig = config::load(path)?;
            c.seed = common.seed.unwrap_or(c.seed);
            c.out = cli_out.or(c.out);
            experiments::run_mean(&c, path)
        }
    }
}

fn absolute(path: PathBuf) -> Result<PathBuf> {
    if path.is_absolute() {
        Ok(path)
    } else {
        Ok(std::env::current_dir()?.join(path))
    }
}

/// Writes `contents` to `path` through a temporary file in the same directory,
/// so a failed run never leaves a partial file behind.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp =
        tempfile::NamedTempFile::new_in(dir).with_context(|| format!("creating a file in {}", dir.display()))?;
    tmp.write_all(contents.as_bytes())?;
    tmp.persist(path)
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// Executes the command, writes its output file and prints the summary.
pub fn run(cli: &Cli) -> Result<()> {
    let outcome = execute(&cli.command)?;
    if let Some((path, contents)) = &outcome.output {
        write_atomic(path, contents)?;
    }
    if !cli.command.common().quiet {
        print!("{}", outcome.summary);
    }
    Ok(())
}

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/matrices.md")]
    mod matrices {}
    #[doc = include_str!("../../../book/src/geometry.md")]
    mod geometry {}
    #[doc = include_str!("../../../book/src/models.md")]
    mod models {}
    #[doc = include_str!("../../../book/src/estimation.md")]
    mod estimation {}
    #[doc = include_str!("../../../book/src/bounds.md")]
    mod bounds {}
    #[doc = include_str!("../../../book/src/classification.md")]
    mod classification {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
