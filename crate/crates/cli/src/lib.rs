//! Scenario files, run directories and the `bohmlab` command line.
//!
//! A run directory holds the requested CSV and binary artifacts, an echo of
//! the effective scenario, and `manifest.json` with a SHA-256 digest of every
//! file. The manifest is written last, so a directory without one is an
//! incomplete run.

use clap::{Parser, Subcommand};
use std::ffi::OsString;
use std::path::PathBuf;

pub mod compare;
pub mod run;
pub mod scenario;

pub use compare::{compare, CompareReport, CompareRow};
pub use run::{read_manifest, run, Manifest, RunOptions, RunOutcome, MANIFEST_NAME};
pub use scenario::{load, parse, Artifact, Scenario};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Invalid(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "bohmlab", version, about = "Semiclassical Schrödinger runs, Bohmian and Wigner measures")]
pub struct Cli {
    /// Worker threads for the numerical kernels.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Only print errors.
    #[arg(long, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Execute a scenario and write its run directory.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        /// Run directory; defaults to the scenario's `output` or runs/<name>.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overrides the ensemble seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Check a scenario without computing anything.
    Validate {
        #[arg(long)]
        scenario: PathBuf,
    },
    /// Distances between the measures of a run and another run or a limit.
    Compare {
        run: PathBuf,
        /// Run directory, `limit_bohmian` or `limit_wigner`.
        target: String,
        /// Also write the report as CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List the built-in initial-data families.
    ListFamilies,
}

fn init_logging(quiet: bool) {
    let level = if quiet { log::LevelFilter::Error } else { log::LevelFilter::Info };
    let _ = env_logger::Builder::new().filter_level(level).parse_default_env().format_timestamp(None).try_init();
}

fn execute(cli: Cli) -> Result<i32, CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Invalid("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Runtime(e.to_string()))?;
    }
    let quiet = cli.quiet;
    match cli.command {
        Command::Run { scenario, out, seed } => {
            let s = load(&scenario)?;
            let outcome = run(&s, &RunOptions { out, seed })?;
            if !quiet {
                println!("ok {}", outcome.dir.display());
                for f in &outcome.manifest.files {
                    println!("  {}  {}", f.sha256, f.path);
                }
                for w in &outcome.manifest.warnings {
                    println!("warning: {w}");
                }
                let failed = outcome.manifest.verdicts.iter().filter(|v| !v.pass).count();
                if !outcome.manifest.verdicts.is_empty() {
                    println!("verdicts: {} pass, {failed} fail", outcome.manifest.verdicts.len() - failed);
                }
            }
            Ok(0)
        }
        Command::Validate { scenario } => {
            let s = load(&scenario)?;
            let derived = s.validate()?;
            println!("ok {}", s.name);
            for d in &derived {
                println!(
                    "  eps = {:.6e}  n = {}  dx = {:.6e}  dp = {:.6e}  p_max = {:.6e}  resolution margin = {:.3} ({})",
                    d.eps, d.n, d.dx, d.dp, d.p_max, d.resolution_margin, d.rule
                );
            }
            if let Some(t) = s.caustic() {
                println!("  first caustic at t = {t:.9}");
            }
            Ok(0)
        }
        Command::Compare { run, target, out } => {
            let report = compare(&run, &target)?;
            let csv = report.to_csv();
            if let Some(path) = out {
                std::fs::write(&path, &csv).map_err(|e| CliError::Runtime(e.to_string()))?;
            }
            print!("{csv}");
            for w in &report.warnings {
                println!("warning: {w}");
            }
            Ok(if report.all_pass() { 0 } else { 1 })
        }
        Command::ListFamilies => {
            for (name, summary) in bohmlab_core::semiclassics::FAMILY_SUMMARIES {
                println!("{name:<22} {summary}");
            }
            Ok(0)
        }
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    init_logging(cli.quiet);
    match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
