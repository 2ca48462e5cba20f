//! Batch driver for `lipschitz-approx`: reads point clouds and lattice files,
//! runs one pipeline, and writes `report.txt`, `summary.txt` and the emitted
//! fields into the output directory. `verify` re-derives every recorded
//! inequality from those files.

pub mod artifact;
pub mod commands;
pub mod config;

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::BufReader;
use std::path::Path;

use lipschitz_approx::{Check, Error, Report};
use thiserror::Error;

use artifact::{max_difference, Artifact, Body};
use config::{Command, RunConfig, Settings};

pub const REPORT_FILE: &str = "report.txt";
pub const SUMMARY_FILE: &str = "summary.txt";
pub const VERIFY_FILE: &str = "verify.txt";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),

    #[error(transparent)]
    Core(#[from] Error),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("check failed: {} (lhs {}, bound {}, margin {})", .0.name, .0.lhs, .0.bound, .0.margin())]
    Failed(Check),
}

impl CliError {
    /// 1 for bad input, 2 for a violated invariant.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Input(_) | CliError::Io(_) => 1,
            CliError::Failed(_) => 2,
            CliError::Core(e) => match e {
                Error::Invariant { .. } | Error::EmptyConstraintFamily(_) | Error::RootFind(_) => 2,
                _ => 1,
            },
        }
    }
}

/// Runs `cfg` inside a pool of the configured width.
pub fn execute(cfg: &RunConfig) -> Result<Report, CliError> {
    match cfg.parallel {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Input(format!("cannot build thread pool: {e}")))?
            .install(|| dispatch(cfg)),
        None => dispatch(cfg),
    }
}

fn dispatch(cfg: &RunConfig) -> Result<Report, CliError> {
    match cfg.command {
        Command::Verify => verify(cfg),
        _ => run(cfg),
    }
}

fn fail_on_first(report: Report) -> Result<Report, CliError> {
    match report.first_failure() {
        Some(c) => Err(CliError::Failed(c.clone())),
        None => Ok(report),
    }
}

/// Computes, writes every file, then fails if any recorded check failed.
pub fn run(cfg: &RunConfig) -> Result<Report, CliError> {
    let commands::Run { mut report, artifacts } = commands::compute(cfg)?;
    let checks = commands::audit(cfg, &report, &artifacts)?;
    report.extend_checks(checks);
    fs::create_dir_all(&cfg.out)?;
    for a in &artifacts {
        a.write(&cfg.out)?;
    }
    report.write_to(File::create(cfg.out.join(REPORT_FILE))?)?;
    fs::write(cfg.out.join(SUMMARY_FILE), summary(&report, &artifacts))?;
    fail_on_first(report)
}

/// Re-checks the run recorded in `cfg.out`. The recorded settings are used
/// except for `tol`, `input` and `parallel` given in `cfg`.
pub fn verify(cfg: &RunConfig) -> Result<Report, CliError> {
    let dir = &cfg.out;
    let path = dir.join(REPORT_FILE);
    let file = File::open(&path).map_err(|e| CliError::Input(format!("missing report {}: {e}", path.display())))?;
    let recorded = Report::read_from(BufReader::new(file)).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    let overrides = verify_overrides(cfg);
    let rcfg = RunConfig::resolve(Settings { out: Some(dir.clone()), ..Settings::from_report(&recorded)?.overlay(overrides) })?;
    if rcfg.command == Command::Verify {
        return Err(CliError::Input("the report records a verify run".into()));
    }
    let files: Vec<String> = recorded.get("artifacts").unwrap_or_default().split_whitespace().map(str::to_string).collect();
    let on_disk: Vec<Artifact> = files.iter().map(|f| Artifact::read(dir, f)).collect::<Result<_, _>>()?;

    let fresh = commands::compute(&rcfg)?;
    let mut fresh_report = fresh.report.clone();
    fresh_report.extend_checks(commands::audit(&rcfg, &fresh.report, &fresh.artifacts)?);

    let mut out = Report::new();
    out.set("verified", dir.display());
    out.set("command", rcfg.command.name());
    out.set("tol", rcfg.tol);
    for a in &on_disk {
        let diff = match fresh.artifacts.iter().find(|b| b.file == a.file) {
            Some(b) => max_difference(a, b),
            None => f64::INFINITY,
        };
        out.push_check(Check::new(format!("{} matches recomputation", a.file), diff, rcfg.tol));
    }
    out.extend_checks(commands::audit(&rcfg, &recorded, &on_disk)?);
    let mut used = vec![false; fresh_report.checks().len()];
    for c in recorded.checks() {
        let hit = fresh_report.checks().iter().enumerate().find(|(i, f)| !used[*i] && f.name == c.name);
        let lhs = match hit {
            Some((i, f)) => {
                used[i] = true;
                (f.lhs - c.lhs).abs()
            }
            None => f64::INFINITY,
        };
        out.push_check(Check::new(format!("recorded `{}` reproduced", c.name), lhs, rcfg.tol));
    }
    out.write_to(File::create(dir.join(VERIFY_FILE))?)?;
    fail_on_first(out)
}

fn verify_overrides(cfg: &RunConfig) -> Settings {
    Settings {
        tol: cfg.tol_override,
        input: cfg.input.clone(),
        ..Settings::default()
    }
}

/// Human-readable table of the report, followed by short plot tables.
pub fn summary(report: &Report, artifacts: &[Artifact]) -> String {
    const MAX_TABLE_ROWS: usize = 32;
    let mut s = String::new();
    let width = report.entries().iter().map(|(k, _)| k.len()).max().unwrap_or(0);
    for (k, v) in report.entries() {
        let _ = writeln!(s, "{k:<width$}  {v}");
    }
    if !report.checks().is_empty() {
        let nw = report.checks().iter().map(|c| c.name.len()).max().unwrap_or(0).max(5);
        let _ = writeln!(s, "\n{:<nw$}  {:>14}  {:>14}  {:>14}  status", "check", "lhs", "bound", "margin");
        for c in report.checks() {
            let status = if c.passed() { "pass" } else { "FAIL" };
            let _ = writeln!(s, "{:<nw$}  {:>14.6e}  {:>14.6e}  {:>14.6e}  {status}", c.name, c.lhs, c.bound, c.margin());
        }
    }
    for a in artifacts {
        let Body::Table(t) = &a.body else { continue };
        if t.rows.len() > MAX_TABLE_ROWS {
            continue;
        }
        let _ = writeln!(s, "\n{}", a.file);
        let _ = writeln!(s, "{}", t.columns.iter().map(|c| format!("{c:>14}")).collect::<String>());
        for r in &t.rows {
            let _ = writeln!(s, "{}", r.iter().map(|x| format!("{x:>14.6e}")).collect::<String>());
        }
    }
    s
}

/// Loads a TOML config (when given) and overlays `flags` on it.
pub fn settings(config: Option<&Path>, flags: Settings) -> Result<Settings, CliError> {
    Ok(match config {
        Some(p) => Settings::from_toml_file(p)?.overlay(flags),
        None => flags,
    })
}
