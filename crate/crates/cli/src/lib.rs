//! Config-driven experiment runner for spinekit.
//!
//! Exit codes: 0 when the command ran and its checks passed, 1 when a check
//! failed, 2 for usage and configuration errors, 3 when a run stopped early
//! (the report is still written, flagged as partial).

pub mod commands;
pub mod config;
pub mod output;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use spinekit::Execution;

use commands::{Context, Unsound};
use config::{ConfigError, Format, LoadedConfig};
use output::{Destination, OUT_DIR_ENV};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILED: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_PARTIAL: i32 = 3;

const DEFAULT_OUT_DIR: &str = "spinekit-out";

#[derive(Debug, Parser)]
#[command(name = "spinekit", version, about = "Branching-process spine estimators and identity checks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Experiment configuration (TOML). Built-in defaults are used without it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Master seed; overrides `run.seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Worker threads for replicates; 0 means one per core. Overrides `run.workers`.
    #[arg(long, global = true)]
    pub workers: Option<usize>,

    /// Output directory; overrides the environment and `output.dir`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    /// Write only this format; both are written by default.
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,

    /// Diagnostic mutation that breaks an identity on purpose. Repeatable.
    #[arg(long, global = true, value_enum)]
    pub unsound: Vec<Unsound>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Direct and spine estimates of the configured query.
    Estimate,
    /// Direct estimate only.
    Direct,
    /// Exact discrete-time identity over the built-in grid.
    VerifyDiscrete,
    /// Continuous-time statistical suite.
    VerifyCt,
    /// Tail-probability bounds against Monte Carlo.
    Bounds {
        /// Comma-separated levels `x`; overrides `bounds.xs`. `--xs=` gives an empty grid.
        #[arg(long, value_parser = parse_grid, allow_hyphen_values = true)]
        xs: Option<Grid>,
        /// Comma-separated times `t`; overrides `bounds.ts`. `--ts=` gives an empty grid.
        #[arg(long, value_parser = parse_grid)]
        ts: Option<Grid>,
    },
    /// Unit mean of the configured motion's martingale.
    MartingaleCheck,
}

/// A comma-separated list of numbers, possibly empty.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid(pub Vec<f64>);

fn parse_grid(s: &str) -> Result<Grid, String> {
    if s.trim().is_empty() {
        return Ok(Grid(Vec::new()));
    }
    s.split(',')
        .map(|v| v.trim().parse::<f64>().map_err(|e| format!("`{v}`: {e}")))
        .collect::<Result<_, _>>()
        .map(Grid)
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Estimate => "estimate",
            Command::Direct => "direct",
            Command::VerifyDiscrete => "verify-discrete",
            Command::VerifyCt => "verify-ct",
            Command::Bounds { .. } => "bounds",
            Command::MartingaleCheck => "martingale-check",
        }
    }
}

/// Parses arguments, runs the command, writes its report and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<ConfigError>().is_some() {
                EXIT_CONFIG
            } else {
                EXIT_PARTIAL
            }
        }
    }
}

fn execute(cli: Cli) -> anyhow::Result<i32> {
    let mut cfg = match &cli.config {
        Some(path) => LoadedConfig::from_path(path)?,
        None => LoadedConfig::defaults(),
    };
    if let Some(seed) = cli.seed {
        cfg.config.run.seed = Some(seed);
    }
    if let Command::Bounds { xs, ts } = &cli.command {
        if let Some(xs) = xs {
            cfg.config.bounds.xs = xs.0.clone();
        }
        if let Some(ts) = ts {
            cfg.config.bounds.ts = ts.0.clone();
        }
        cfg.validate()?;
    }
    let workers = cli.workers.or(cfg.config.run.workers).unwrap_or(0);
    let ctx = Context {
        seed: cfg.config.run.seed,
        exec: Execution::parallel(workers),
        unsound: cli.unsound.clone(),
        cfg,
    };

    let outcome = match &cli.command {
        Command::Estimate => commands::estimate(&ctx)?,
        Command::Direct => commands::direct(&ctx)?,
        Command::VerifyDiscrete => commands::verify_discrete(&ctx)?,
        Command::VerifyCt => commands::verify_ct(&ctx)?,
        Command::Bounds { .. } => {
            let b = &ctx.cfg.config.bounds;
            commands::bounds(&ctx, &b.xs, &b.ts)?
        }
        Command::MartingaleCheck => commands::martingale(&ctx)?,
    };

    let out = &ctx.cfg.config.output;
    let dir = cli
        .out
        .clone()
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .or_else(|| out.dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR));
    let formats = match cli.format {
        Some(f) => vec![f],
        None => out.formats.clone().unwrap_or_else(|| vec![Format::Json, Format::Csv]),
    };
    let dest = Destination {
        dir,
        stem: out.name.clone().unwrap_or_else(|| cli.command.name().to_string()),
        formats,
    };
    let written = output::write(&outcome, &dest, ctx.seed, &ctx.cfg.hash())?;

    let verdict = match (&outcome.error, outcome.passed) {
        (Some(_), _) => "PARTIAL",
        (None, true) => "PASS",
        (None, false) => "FAIL",
    };
    println!("{} {}: {} rows", verdict, outcome.command, outcome.csv_rows.len());
    for path in &written {
        println!("wrote {}", path.display());
    }
    if let Some(e) = &outcome.error {
        eprintln!("error: {e}");
        return Ok(EXIT_PARTIAL);
    }
    Ok(if outcome.passed { EXIT_OK } else { EXIT_FAILED })
}
