//! Command-line driver for `wmink-core`: domain description files, the
//! verification subcommands, corpus suites and JSON reports.

pub mod commands;
pub mod error;
pub mod report;
pub mod spec_file;
pub mod suite;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use clap::{Parser, Subcommand};

pub use error::{CliError, CliResult};
pub use report::{Report, Verdict};
pub use spec_file::DomainSpecFile;

use commands::{FlowOptions, ReillyOptions, RunOptions};

#[derive(Debug, Parser)]
#[command(name = "wmink", version, about = "Weighted Reilly, Neumann, Minkowski and flow checks")]
pub struct Cli {
    /// Write the JSON report to this file.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Include wall time in the report (makes it non-reproducible).
    #[arg(long, global = true)]
    pub timing: bool,
    /// Resolution level, overriding the domain file and WMINK_RESOLUTION.
    #[arg(long, global = true)]
    pub resolution: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Term-by-term weighted Reilly identity and boundary identities.
    CheckReilly {
        spec: PathBuf,
        #[arg(long, default_value = "random-seeded")]
        field: String,
        #[arg(long, default_value = "V")]
        weight: String,
        #[arg(long, allow_hyphen_values = true)]
        kparam: Option<f64>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Weighted Neumann problem and the Minkowski inequality through Reilly.
    SolveNeumann { spec: PathBuf },
    /// Weighted Minkowski inequality, hypothesis audit and equality detection.
    Minkowski { spec: PathBuf },
    /// Equidistant flow trace with concavity and comparison checks.
    Flow {
        spec: PathBuf,
        #[arg(long)]
        tmax: Option<f64>,
        #[arg(long, default_value_t = 40)]
        steps: usize,
        /// Write the trace as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Closed-form weighted integrals of a centered geodesic ball.
    BallForms {
        #[arg(long)]
        space: String,
        #[arg(long)]
        n: usize,
        #[arg(long = "R", allow_hyphen_values = true)]
        big_r: f64,
    },
    /// Run every domain of a corpus directory against its sidecar.
    Suite {
        dir: PathBuf,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Directory for per-run reports and traces.
        #[arg(long)]
        reports: Option<PathBuf>,
    },
}

fn write_file(path: &PathBuf, text: &str) -> CliResult<()> {
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

/// Runs a parsed command line and returns its report.
pub fn execute(cli: &Cli) -> CliResult<Report> {
    let run = RunOptions {
        resolution: cli.resolution,
    };
    let start = Instant::now();
    let mut report = match &cli.command {
        Command::CheckReilly {
            spec,
            field,
            weight,
            kparam,
            seed,
        } => {
            let opts = ReillyOptions {
                field: field.clone(),
                weight: weight.clone(),
                kparam: *kparam,
                seed: *seed,
            };
            commands::check_reilly(&DomainSpecFile::load(spec)?, &opts, &run)?
        }
        Command::SolveNeumann { spec } => commands::solve_neumann(&DomainSpecFile::load(spec)?, &run)?,
        Command::Minkowski { spec } => commands::minkowski(&DomainSpecFile::load(spec)?, &run)?,
        Command::Flow { spec, tmax, steps, csv } => {
            let opts = FlowOptions {
                tmax: *tmax,
                steps: *steps,
            };
            let (report, trace) = commands::flow(&DomainSpecFile::load(spec)?, &opts, &run)?;
            if let Some(path) = csv {
                write_file(path, &commands::trace_csv(&trace))?;
            }
            report
        }
        Command::BallForms { space, n, big_r } => commands::ball_forms(space, *n, *big_r)?,
        Command::Suite { dir, jobs, reports } => suite::run_suite(dir, &run, *jobs, reports.as_deref())?,
    };
    if cli.timing {
        report.timing_seconds = Some(start.elapsed().as_secs_f64());
    }
    if let Some(path) = &cli.out {
        write_file(path, &report.to_json())?;
    }
    Ok(report)
}

/// Parses `argv`, runs the command, prints the verdict table and returns
/// the exit code: 0 if every verdict passes, 2 for unparsable input, 3 for a
/// violated precondition, 4 for a failed verification.
pub fn cli_main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(&cli) {
        Ok(report) => {
            let mut stdout = std::io::stdout().lock();
            let _ = stdout.write_all(report.table().as_bytes());
            match report.verdicts.iter().find(|v| !v.passed) {
                None => 0,
                Some(v) => {
                    let e = CliError::Verification {
                        invariant: v.name.clone(),
                        detail: format!("{} of {} verdicts failed", report.verdicts.iter().filter(|v| !v.passed).count(), report.verdicts.len()),
                    };
                    eprintln!("error: {e}");
                    e.exit_code()
                }
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
