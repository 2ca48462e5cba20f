//! Run settings from a TOML file, command-line flags and recorded reports.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use lipschitz_approx::{Norm, Perturbation, Report};
use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Lip,
    Extend,
    LocalStep,
    GlobalApprox,
    Smooth,
    Envelope,
    Eikonal,
    Casebook,
    Verify,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Lip => "lip",
            Command::Extend => "extend",
            Command::LocalStep => "local-step",
            Command::GlobalApprox => "global-approx",
            Command::Smooth => "smooth",
            Command::Envelope => "envelope",
            Command::Eikonal => "eikonal",
            Command::Casebook => "casebook",
            Command::Verify => "verify",
        }
    }
}

impl FromStr for Command {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        <Command as clap::ValueEnum>::from_str(s, false).map_err(|_| CliError::Input(format!("unknown command `{s}`")))
    }
}

/// Which casebook instance to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Case {
    L1Disc,
    LInfImage,
}

impl Case {
    pub fn name(self) -> &'static str {
        match self {
            Case::L1Disc => "l1-disc",
            Case::LInfImage => "linf-image",
        }
    }
}

impl FromStr for Case {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        match s {
            "l1-disc" => Ok(Case::L1Disc),
            "linf-image" => Ok(Case::LInfImage),
            other => Err(CliError::Input(format!("unknown case `{other}` (l1-disc, linf-image)"))),
        }
    }
}

/// Every setting is optional so that a config file, flags and a recorded
/// report can be layered.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Settings {
    pub command: Option<Command>,
    pub case: Option<String>,
    pub input: Option<PathBuf>,
    pub norm: Option<String>,
    pub eps: Option<f64>,
    pub lambda: Option<f64>,
    pub mu: Option<f64>,
    pub delta: Option<f64>,
    #[serde(rename = "K")]
    pub k: Option<f64>,
    pub out: Option<PathBuf>,
    pub tol: Option<f64>,
    pub seed: Option<u64>,
    pub parallel: Option<usize>,
    pub samples: Option<usize>,
    pub field: Option<String>,
    pub method: Option<String>,
}

macro_rules! overlay_fields {
    ($base:ident, $top:ident, $($f:ident),*) => {
        Settings { $($f: $top.$f.or($base.$f)),* }
    };
}

impl Settings {
    pub fn from_toml_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Input(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Input(format!("config {}: {e}", path.display())))
    }

    /// `top` wins wherever it is set.
    pub fn overlay(self, top: Settings) -> Settings {
        let base = self;
        overlay_fields!(
            base, top, command, case, input, norm, eps, lambda, mu, delta, k, out, tol, seed, parallel, samples,
            field, method
        )
    }

    /// The parameters recorded in a report by [`RunConfig::record`].
    pub fn from_report(report: &Report) -> Result<Self, CliError> {
        let num = |key: &str| -> Result<Option<f64>, CliError> {
            report.get(key).map(|_| report.parse::<f64>(key)).transpose().map_err(CliError::from)
        };
        let text = |key: &str| report.get(key).map(str::to_string);
        Ok(Settings {
            command: text("command").map(|c| c.parse()).transpose()?,
            case: text("case"),
            input: text("input").map(PathBuf::from),
            norm: text("norm"),
            eps: num("eps")?,
            lambda: num("lambda")?,
            mu: num("mu")?,
            delta: num("delta")?,
            k: num("K")?,
            out: None,
            tol: num("tol")?,
            seed: report.get("seed").map(|_| report.parse::<u64>("seed")).transpose()?,
            parallel: None,
            samples: report.get("samples").map(|_| report.parse::<usize>("samples")).transpose()?,
            field: text("field"),
            method: text("method"),
        })
    }
}

pub const DEFAULT_OUT: &str = "out";
pub const DEFAULT_SEED: u64 = 0;
pub const DEFAULT_SAMPLES: usize = 1024;

/// Validated settings for one run.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub command: Command,
    pub case: Option<Case>,
    pub input: Option<PathBuf>,
    /// Point clouds default to ℓ2; lattice files carry their own norm.
    pub norm: Option<Norm>,
    pub eps: Option<f64>,
    pub lambda: Option<f64>,
    pub mu: Option<f64>,
    pub delta: Option<f64>,
    pub k: Option<f64>,
    pub out: PathBuf,
    pub tol: f64,
    /// `tol` as given, before the default is applied.
    pub tol_override: Option<f64>,
    pub seed: u64,
    pub parallel: Option<usize>,
    pub samples: usize,
    pub field: Option<String>,
    pub method: Perturbation,
}

fn positive(name: &str, v: Option<f64>) -> Result<(), CliError> {
    match v {
        Some(x) if !(x > 0.0 && x.is_finite()) => {
            Err(CliError::Input(format!("domain error: {name} = {x} must be positive and finite")))
        }
        _ => Ok(()),
    }
}

impl RunConfig {
    pub fn resolve(s: Settings) -> Result<Self, CliError> {
        let command = s.command.ok_or_else(|| CliError::Input("no command given".into()))?;
        let norm = s.norm.as_deref().map(str::parse::<Norm>).transpose()?;
        let case = match (command, s.case.as_deref()) {
            (Command::Casebook, None) => Some(Case::L1Disc),
            (Command::Casebook, Some(c)) => Some(c.parse()?),
            (_, Some(c)) => return Err(CliError::Input(format!("`{c}` is only meaningful for casebook"))),
            (_, None) => None,
        };
        let method = s.method.as_deref().unwrap_or("fronts").parse::<Perturbation>()?;
        let cfg = RunConfig {
            command,
            case,
            input: s.input,
            norm,
            eps: s.eps,
            lambda: s.lambda,
            mu: s.mu,
            delta: s.delta,
            k: s.k,
            out: s.out.unwrap_or_else(|| PathBuf::from(DEFAULT_OUT)),
            tol: s.tol.unwrap_or(lipschitz_approx::DEFAULT_TOL),
            tol_override: s.tol,
            seed: s.seed.unwrap_or(DEFAULT_SEED),
            parallel: s.parallel,
            samples: s.samples.unwrap_or(DEFAULT_SAMPLES),
            field: s.field,
            method,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), CliError> {
        positive("eps", self.eps)?;
        positive("lambda", self.lambda)?;
        positive("K", self.k)?;
        for (name, v) in [("mu", self.mu), ("delta", self.delta)] {
            if let Some(x) = v {
                if !(x >= 0.0 && x.is_finite()) {
                    return Err(CliError::Input(format!("domain error: {name} = {x} must be nonnegative")));
                }
            }
        }
        if !(self.tol >= 0.0 && self.tol.is_finite()) {
            return Err(CliError::Input(format!("domain error: tol = {} must be nonnegative", self.tol)));
        }
        if self.parallel == Some(0) {
            return Err(CliError::Input("domain error: parallel width must be at least 1".into()));
        }
        if self.command == Command::LocalStep {
            let (lambda, mu) = (self.lambda.unwrap_or(f64::NAN), self.mu.unwrap_or(f64::NAN));
            if self.lambda.is_none() || self.mu.is_none() {
                return Err(CliError::Input("local-step needs --lambda and --mu".into()));
            }
            if !(mu < lambda && lambda < 1.0) {
                return Err(CliError::Input(format!(
                    "domain error: need 0 <= mu < lambda < 1, got mu = {mu}, lambda = {lambda}"
                )));
            }
        }
        if self.command == Command::Envelope {
            if let (Some(l), Some(m)) = (self.lambda, self.mu) {
                if !(m < l) {
                    return Err(CliError::Input(format!("domain error: need 0 < mu < lambda, got mu = {m}, lambda = {l}")));
                }
            }
        }
        let needs_input = !matches!(self.command, Command::Casebook | Command::Verify);
        if needs_input && self.input.is_none() {
            return Err(CliError::Input(format!("{} needs --input", self.command.name())));
        }
        Ok(())
    }

    /// Writes the settings that determine the result into `report`.
    pub fn record(&self, report: &mut Report) {
        report.set("command", self.command.name());
        if let Some(c) = self.case {
            report.set("case", c.name());
        }
        if let Some(p) = &self.input {
            report.set("input", p.display());
        }
        if let Some(n) = self.norm {
            report.set("norm", n);
        }
        for (key, v) in [("eps", self.eps), ("lambda", self.lambda), ("mu", self.mu), ("delta", self.delta), ("K", self.k)] {
            if let Some(x) = v {
                report.set(key, x);
            }
        }
        report.set("tol", self.tol);
        report.set("seed", self.seed);
        if self.command == Command::Casebook {
            report.set("samples", self.samples);
        }
        if let Some(f) = &self.field {
            report.set("field", f);
        }
        if self.command == Command::Eikonal {
            report.set("method", self.method);
        }
    }
}
