//! Corpus runs. Every `NAME.toml` domain file in the directory has a
//! `NAME.expect.toml` sidecar listing the commands to run and the expected
//! verdicts:
//!
//! ```toml
//! [[run]]
//! command = "flow"
//! steps = 40            # command options: tmax, steps, field, weight, kparam, seed
//! expect_exit = 0       # optional; by default 0 if every listed verdict is true, else 4
//!
//! [run.expect]
//! concavity = true
//! ball_equality = true
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::commands::{self, FlowOptions, ReillyOptions, RunOptions};
use crate::error::{CliError, CliResult};
use crate::report::{Report, Verdict};
use crate::spec_file::DomainSpecFile;

pub const SIDECAR_SUFFIX: &str = ".expect.toml";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sidecar {
    pub run: Vec<ExpectedRun>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpectedRun {
    pub command: String,
    #[serde(default)]
    pub expect_exit: Option<i32>,
    #[serde(default)]
    pub expect: BTreeMap<String, bool>,
    #[serde(default)]
    pub tmax: Option<f64>,
    #[serde(default)]
    pub steps: Option<usize>,
    #[serde(default)]
    pub field: Option<String>,
    #[serde(default)]
    pub weight: Option<String>,
    #[serde(default)]
    pub kparam: Option<f64>,
    #[serde(default)]
    pub seed: Option<u64>,
}

impl ExpectedRun {
    pub fn expected_exit(&self) -> i32 {
        self.expect_exit
            .unwrap_or(if self.expect.values().all(|&v| v) { 0 } else { 4 })
    }
}

/// Outcome of one sidecar entry.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunOutcome {
    pub domain: String,
    pub command: String,
    pub exit_code: i32,
    pub expected_exit: i32,
    pub failed_verdicts: Vec<String>,
    pub error: Option<String>,
    pub mismatches: Vec<String>,
}

impl RunOutcome {
    pub fn matched(&self) -> bool {
        self.mismatches.is_empty()
    }
}

/// Sorted domain files of a corpus directory.
pub fn corpus_files(dir: &Path) -> CliResult<Vec<PathBuf>> {
    let entries = std::fs::read_dir(dir).map_err(|e| CliError::io(dir, e))?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| CliError::io(dir, e))?.path();
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
        if name.ends_with(".toml") && !name.ends_with(SIDECAR_SUFFIX) {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

pub fn sidecar_path(spec: &Path) -> PathBuf {
    let stem = spec.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
    spec.with_file_name(format!("{stem}{SIDECAR_SUFFIX}"))
}

pub fn load_sidecar(spec: &Path) -> CliResult<Sidecar> {
    let path = sidecar_path(spec);
    let text = std::fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
    let sidecar: Sidecar = toml::from_str(&text)
        .map_err(|e| CliError::parse("sidecar_syntax", format!("{}: {}", path.display(), e.message())))?;
    for run in &sidecar.run {
        if !["check-reilly", "solve-neumann", "minkowski", "flow"].contains(&run.command.as_str()) {
            return Err(CliError::parse(
                "sidecar_command",
                format!("{}: unknown command `{}`", path.display(), run.command),
            ));
        }
    }
    Ok(sidecar)
}

/// Runs a single command on a parsed domain file. Flow runs also return the
/// CSV trace.
pub fn run_command(
    spec: &DomainSpecFile,
    run: &ExpectedRun,
    opts: &RunOptions,
) -> CliResult<(Report, Option<String>)> {
    match run.command.as_str() {
        "check-reilly" => {
            let d = ReillyOptions::default();
            let ro = ReillyOptions {
                field: run.field.clone().unwrap_or(d.field),
                weight: run.weight.clone().unwrap_or(d.weight),
                kparam: run.kparam,
                seed: run.seed.unwrap_or(d.seed),
            };
            Ok((commands::check_reilly(spec, &ro, opts)?, None))
        }
        "solve-neumann" => Ok((commands::solve_neumann(spec, opts)?, None)),
        "minkowski" => Ok((commands::minkowski(spec, opts)?, None)),
        "flow" => {
            let fo = FlowOptions {
                tmax: run.tmax,
                steps: run.steps.unwrap_or(FlowOptions::default().steps),
            };
            let (report, trace) = commands::flow(spec, &fo, opts)?;
            Ok((report, Some(commands::trace_csv(&trace))))
        }
        other => Err(CliError::parse("sidecar_command", format!("unknown command `{other}`"))),
    }
}

fn evaluate(domain: &str, run: &ExpectedRun, result: &CliResult<(Report, Option<String>)>) -> RunOutcome {
    let expected_exit = run.expected_exit();
    let mut mismatches = Vec::new();
    let (exit_code, failed_verdicts, error) = match result {
        Ok((report, _)) => {
            for (name, want) in &run.expect {
                match report.verdict(name) {
                    Some(v) if v.passed == *want => {}
                    Some(v) => mismatches.push(format!("{name}: expected {want}, got {}", v.passed)),
                    None => mismatches.push(format!("{name}: not reported")),
                }
            }
            let failed: Vec<String> = report
                .verdicts
                .iter()
                .filter(|v| !v.passed)
                .map(|v| v.name.clone())
                .collect();
            (if failed.is_empty() { 0 } else { 4 }, failed, None)
        }
        Err(e) => {
            if !run.expect.is_empty() {
                mismatches.push(format!("no verdicts: {e}"));
            }
            (e.exit_code(), Vec::new(), Some(format!("{}: {e}", e.invariant())))
        }
    };
    if exit_code != expected_exit {
        mismatches.push(format!("exit code {exit_code}, expected {expected_exit}"));
    }
    RunOutcome {
        domain: domain.to_string(),
        command: run.command.clone(),
        exit_code,
        expected_exit,
        failed_verdicts,
        error,
        mismatches,
    }
}

fn run_file(path: &Path, opts: &RunOptions, reports: Option<&Path>) -> CliResult<Vec<RunOutcome>> {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
    let sidecar = load_sidecar(path)?;
    let spec = DomainSpecFile::load(path);
    let mut out = Vec::new();
    for run in &sidecar.run {
        let result = match &spec {
            Ok(s) => run_command(s, run, opts),
            Err(e) => Err(CliError::parse(e.invariant(), e.to_string())),
        };
        if let (Some(dir), Ok((report, csv))) = (reports, &result) {
            let json_path = dir.join(format!("{stem}.{}.json", run.command));
            std::fs::write(&json_path, report.to_json()).map_err(|e| CliError::io(&json_path, e))?;
            if let Some(csv) = csv {
                let csv_path = dir.join(format!("{stem}.flow.csv"));
                std::fs::write(&csv_path, csv).map_err(|e| CliError::io(&csv_path, e))?;
            }
        }
        out.push(evaluate(&stem, run, &result));
    }
    Ok(out)
}

/// Runs every sidecar entry of the corpus in `dir`, with up to `jobs` files
/// processed concurrently. Per-file reports go to `reports` when given.
pub fn run_suite(dir: &Path, opts: &RunOptions, jobs: usize, reports: Option<&Path>) -> CliResult<Report> {
    let files = corpus_files(dir)?;
    if files.is_empty() {
        return Err(CliError::parse("corpus_nonempty", format!("no domain files in {}", dir.display())));
    }
    if let Some(r) = reports {
        std::fs::create_dir_all(r).map_err(|e| CliError::io(r, e))?;
    }
    let slots: Vec<Mutex<Option<CliResult<Vec<RunOutcome>>>>> = files.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    std::thread::scope(|scope| {
        for _ in 0..jobs.clamp(1, files.len()) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= files.len() {
                    break;
                }
                let r = run_file(&files[i], opts, reports);
                *slots[i].lock().expect("slot") = Some(r);
            });
        }
    });
    let mut outcomes = Vec::new();
    for slot in slots {
        outcomes.extend(slot.into_inner().expect("slot").expect("every file ran")?);
    }
    let mut report = Report::new("suite", None, opts.resolution);
    report.parameters.insert("corpus".into(), json!(dir.display().to_string()));
    report.results = json!({ "runs": outcomes });
    report.verdicts = outcomes
        .iter()
        .map(|o| Verdict::holds(&format!("{}/{}", o.domain, o.command), o.matched()))
        .collect();
    for o in outcomes.iter().filter(|o| !o.matched()) {
        report
            .warnings
            .push(format!("{}/{}: {}", o.domain, o.command, o.mismatches.join("; ")));
    }
    Ok(report)
}
