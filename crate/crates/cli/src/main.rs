use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use lipschitz_cli::config::{Command, RunConfig, Settings};
use lipschitz_cli::{execute, settings, CliError};

/// Boundary-preserving Lipschitz approximation, envelopes and eikonal surrogates.
#[derive(Debug, Parser)]
#[command(name = "lipschitz", version)]
struct Cli {
    /// What to run.
    #[arg(value_enum)]
    command: Option<Command>,
    /// Casebook instance: l1-disc or linf-image.
    case: Option<String>,
    /// TOML file with any of the options below; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Point-cloud CSV or lattice file.
    #[arg(long)]
    input: Option<PathBuf>,
    /// l1, l2 or linf.
    #[arg(long)]
    norm: Option<String>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    /// Lipschitz bound of the input.
    #[arg(long = "K")]
    k: Option<f64>,
    /// Output directory (default `out`).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads.
    #[arg(long)]
    parallel: Option<usize>,
    /// Casebook boundary samples.
    #[arg(long)]
    samples: Option<usize>,
    /// Lattice field to read (default: the first).
    #[arg(long)]
    field: Option<String>,
    /// Eikonal perturbation: fronts or cells.
    #[arg(long)]
    method: Option<String>,
}

impl Cli {
    fn into_settings(self) -> (Option<PathBuf>, Settings) {
        let flags = Settings {
            command: self.command,
            case: self.case,
            input: self.input,
            norm: self.norm,
            eps: self.eps,
            lambda: self.lambda,
            mu: self.mu,
            delta: self.delta,
            k: self.k,
            out: self.out,
            tol: self.tol,
            seed: self.seed,
            parallel: self.parallel,
            samples: self.samples,
            field: self.field,
            method: self.method,
        };
        (self.config, flags)
    }
}

fn main() -> ExitCode {
    let (config, flags) = Cli::parse().into_settings();
    let outcome = settings(config.as_deref(), flags).and_then(RunConfig::resolve).and_then(|cfg| {
        let report = execute(&cfg)?;
        Ok((cfg, report))
    });
    match outcome {
        Ok((cfg, _)) => {
            println!("ok: {} ({})", cfg.command.name(), cfg.out.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &CliError) -> u8 {
    e.exit_code()
}
