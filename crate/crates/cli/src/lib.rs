//! Experiment runner for the stosplit solvers.
//!
//! `stosplit check` validates a config without iterating, `stosplit run`
//! executes a seed ensemble, `stosplit sweep` runs a parameter grid.

pub mod config;
pub mod run;
pub mod sweep;
pub mod validate;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

pub use config::{Algorithm, Diagnostic, RunConfig, Seeds};
pub use run::{RunSummary, SeedReport};
pub use validate::ValidationReport;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{}", render(diagnostics))]
    Config { diagnostics: Vec<Diagnostic> },
    #[error("seed {seed}: non-finite {what} at iteration {iteration}")]
    Numerical { seed: u64, iteration: usize, what: String },
    #[error("seed {seed}: {message}")]
    Run { seed: u64, message: String },
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Io(String),
}

fn render(ds: &[Diagnostic]) -> String {
    let mut s = String::from("invalid configuration");
    for d in ds {
        let _ = write!(s, "\n  {d}");
    }
    s
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config { .. } | CliError::Usage(_) => 2,
            CliError::Numerical { .. } | CliError::Run { .. } => 3,
            CliError::Io(_) => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "stosplit", version, about = "Stochastic projective splitting experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run every validator and operator property check; no iterations.
    Check(CommonArgs),
    /// Run the seed ensemble of a config.
    Run {
        /// Expected algorithm; must match the config when given.
        #[arg(value_enum)]
        algorithm: Option<AlgorithmArg>,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Run every point of the config's `[sweep]` grid.
    Sweep(CommonArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum AlgorithmArg {
    Ppa,
    Saddle,
    Kt,
    Engine,
}

impl From<AlgorithmArg> for Algorithm {
    fn from(a: AlgorithmArg) -> Self {
        match a {
            AlgorithmArg::Ppa => Algorithm::Ppa,
            AlgorithmArg::Saddle => Algorithm::Saddle,
            AlgorithmArg::Kt => Algorithm::Kt,
            AlgorithmArg::Engine => Algorithm::Engine,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    #[arg(long, value_name = "PATH")]
    pub config: PathBuf,
    /// Output directory; overrides the config's `output`.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// A seed count (`5`) or a comma-separated list (`1,2,7`).
    #[arg(long, value_name = "N|LIST")]
    pub seeds: Option<String>,
    #[arg(long)]
    pub quiet: bool,
}

impl CommonArgs {
    pub fn new(config: impl Into<PathBuf>) -> Self {
        CommonArgs {
            config: config.into(),
            out: None,
            seeds: None,
            quiet: true,
        }
    }
}

/// A parsed config with its text and directory.
pub struct Loaded {
    pub config: RunConfig,
    pub source: String,
    pub base_dir: PathBuf,
}

pub fn load(args: &CommonArgs) -> Result<Loaded, CliError> {
    let source = std::fs::read_to_string(&args.config)
        .map_err(|e| CliError::Io(format!("{}: {e}", args.config.display())))?;
    let mut config = config::parse(&source).map_err(|d| CliError::Config { diagnostics: vec![d] })?;
    if let Some(s) = &args.seeds {
        config.seeds = Seeds::parse_flag(s, config.seeds.base()).map_err(|m| CliError::Usage(format!("--seeds: {m}")))?;
    }
    if let Some(o) = &args.out {
        config.output = o.clone();
    }
    let base_dir = args.config.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok(Loaded {
        config,
        source,
        base_dir,
    })
}

/// Validates and, when `--out` is given, writes `validation.json` there.
pub fn cmd_check(args: &CommonArgs) -> Result<ValidationReport, CliError> {
    let l = load(args)?;
    let report = if l.config.sweep.is_some() {
        check_grid(&l)?
    } else {
        validate::prepare(&l.config, &l.source, &l.base_dir).1
    };
    if let Some(out) = &args.out {
        std::fs::create_dir_all(out).map_err(|e| CliError::Io(format!("{}: {e}", out.display())))?;
        run::write_json(&out.join("validation.json"), &report)?;
    }
    Ok(report)
}

/// The first failing grid point's report, or the last point's when all pass.
fn check_grid(l: &Loaded) -> Result<ValidationReport, CliError> {
    let points = sweep::grid(&l.config, &l.source)?;
    let mut last = None;
    for p in &points {
        let r = validate::prepare(p, &l.source, &l.base_dir).1;
        if !r.ok {
            return Ok(r);
        }
        last = Some(r);
    }
    last.ok_or_else(|| CliError::Usage("empty grid".into()))
}

fn require_ok(report: &ValidationReport) -> Result<(), CliError> {
    if report.ok {
        Ok(())
    } else {
        Err(CliError::Config {
            diagnostics: report.errors.clone(),
        })
    }
}

fn warn(report: &ValidationReport, quiet: bool) {
    if !quiet {
        for w in &report.warnings {
            eprintln!("warning: {w}");
        }
    }
}

pub fn cmd_run(args: &CommonArgs, expected: Option<Algorithm>) -> Result<RunSummary, CliError> {
    let l = load(args)?;
    if let Some(a) = expected {
        if a != l.config.algorithm {
            return Err(CliError::Usage(format!(
                "`run {a}` given a config for algorithm `{}`",
                l.config.algorithm
            )));
        }
    }
    let (prepared, report) = validate::prepare(&l.config, &l.source, &l.base_dir);
    require_ok(&report)?;
    warn(&report, args.quiet);
    let prepared = prepared.expect("validated config yields a job");
    run::execute(&l.config, &prepared, &report, &l.config.output, args.quiet)
}

/// Validates every grid point before running any of them.
pub fn cmd_sweep(args: &CommonArgs) -> Result<Vec<sweep::SweepRow>, CliError> {
    let l = load(args)?;
    let points = sweep::grid(&l.config, &l.source)?;
    let mut jobs = Vec::with_capacity(points.len());
    for p in &points {
        let (prepared, report) = validate::prepare(p, &l.source, &l.base_dir);
        require_ok(&report)?;
        jobs.push((prepared.expect("validated config yields a job"), report));
    }
    let mut rows = Vec::with_capacity(points.len());
    for (j, (p, (prepared, report))) in points.iter().zip(&jobs).enumerate() {
        if !args.quiet {
            eprintln!("point {j}: {}", p.output.display());
        }
        warn(report, args.quiet);
        let summary = run::execute(p, prepared, report, &p.output, args.quiet)?;
        rows.push(sweep::row(j, &p.output, &summary));
    }
    std::fs::create_dir_all(&l.config.output).map_err(|e| CliError::Io(e.to_string()))?;
    sweep::write_table(&l.config.output.join(sweep::TABLE_NAME), &rows)?;
    Ok(rows)
}

fn report_check(r: &ValidationReport, quiet: bool) -> Result<(), CliError> {
    println!("{}", serde_json::to_string_pretty(r).map_err(|e| CliError::Io(e.to_string()))?);
    warn(r, quiet);
    require_ok(r)
}

pub fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Check(a) => report_check(&cmd_check(&a)?, a.quiet),
        Command::Run { algorithm, common } => {
            let s = cmd_run(&common, algorithm.map(Into::into))?;
            if !common.quiet {
                let d = s.final_mean_distance.map_or("-".into(), |d| format!("{d:.6e}"));
                eprintln!(
                    "{} seeds written to {}; final mean distance {d}",
                    s.seeds.len(),
                    s.config.output.display()
                );
            }
            Ok(())
        }
        Command::Sweep(a) => {
            let rows = cmd_sweep(&a)?;
            if !a.quiet {
                eprintln!("{} grid points; comparison table in {}", rows.len(), sweep::TABLE_NAME);
            }
            Ok(())
        }
    }
}

pub fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
