//! `ambicon`: batch front end for the contract solvers.
//!
//! Every command reads a JSON config and writes `solution.json`,
//! `report.csv` and `metadata.json` into the output directory; `pde` adds
//! `surface.csv` and `sweep` adds `sweep.csv`.

mod commands;
mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use ambicon::analytic::AnalyticError;
use ambicon::harness::{write_summary_csv, HarnessError};
use ambicon::hjbi::HjbiError;
use ambicon::montecarlo::McError;
use clap::{Parser, Subcommand};
use serde_json::json;

use crate::commands::Outcome;

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Solver(String),
    Io(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Io(_) => 2,
            CliError::Solver(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Solver(m) => write!(f, "solver error: {m}"),
            CliError::Io(m) => write!(f, "output error: {m}"),
        }
    }
}

impl From<AnalyticError> for CliError {
    fn from(e: AnalyticError) -> Self {
        CliError::Solver(e.to_string())
    }
}

impl From<McError> for CliError {
    fn from(e: McError) -> Self {
        CliError::Solver(e.to_string())
    }
}

impl From<HjbiError> for CliError {
    fn from(e: HjbiError) -> Self {
        match e {
            HjbiError::InvalidField(_) | HjbiError::InvalidGrid(_) => CliError::Config(e.to_string()),
            _ => CliError::Solver(e.to_string()),
        }
    }
}

impl From<HarnessError> for CliError {
    fn from(e: HarnessError) -> Self {
        match e {
            HarnessError::Analytic(e) => e.into(),
            HarnessError::MonteCarlo(e) => e.into(),
            HarnessError::Hjbi(e) => e.into(),
            HarnessError::InvalidCase(m) => CliError::Config(m),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "ambicon", version, about = "Optimal contracts under volatility ambiguity")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides `output_dir` in the config).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Monte Carlo seed (overrides `mc.seed` in the config).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Suppress the one-line summary.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// Closed-form first-best contract (or the maximising sequence).
    FirstBest,
    /// Closed-form second-best contract.
    SecondBest,
    /// Finite-difference solution of the HJBI equation.
    Pde,
    /// Worst-case Monte Carlo evaluation of a contract.
    Simulate,
    /// Gâteaux optimality residuals at the first-best optimum.
    GateauxCheck,
    /// Cross-verification of closed forms, PDE and Monte Carlo.
    Crosscheck,
    /// First-best and second-best values along one parameter.
    Sweep,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::FirstBest => "first-best",
            Command::SecondBest => "second-best",
            Command::Pde => "pde",
            Command::Simulate => "simulate",
            Command::GateauxCheck => "gateaux-check",
            Command::Crosscheck => "crosscheck",
            Command::Sweep => "sweep",
        }
    }
}

fn unix_ms() -> u128 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_millis())
}

fn threads_from_env() -> Result<Option<usize>, CliError> {
    match std::env::var("AMBICON_THREADS") {
        Err(_) => Ok(None),
        Ok(s) => match s.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(CliError::Config(format!(
                "AMBICON_THREADS must be a positive integer (got {s:?})"
            ))),
        },
    }
}

fn write_file(dir: &Path, name: &str, bytes: &[u8]) -> Result<(), CliError> {
    let path = dir.join(name);
    fs::write(&path, bytes).map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))
}

fn write_artifacts(
    dir: &Path,
    command: Command,
    config: &config::RunConfig,
    outcome: &Outcome,
    started: u128,
    threads: Option<usize>,
) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("cannot create {}: {e}", dir.display())))?;
    let solution = json!({
        "command": command.name(),
        "config": config,
        "solution": outcome.solution,
    });
    let mut text = serde_json::to_string_pretty(&solution).map_err(|e| CliError::Io(e.to_string()))?;
    text.push('\n');
    write_file(dir, "solution.json", text.as_bytes())?;

    let mut report = Vec::new();
    write_summary_csv(&outcome.report, &mut report).map_err(|e| CliError::Io(e.to_string()))?;
    write_file(dir, "report.csv", &report)?;
    for (name, bytes) in &outcome.files {
        write_file(dir, name, bytes)?;
    }

    let meta = json!({
        "command": command.name(),
        "version": env!("CARGO_PKG_VERSION"),
        "started_unix_ms": started,
        "finished_unix_ms": unix_ms(),
        "threads": threads,
        "runtime_ms": outcome.report.iter().map(|r| (r.case_id.clone(), r.runtime_ms)).collect::<Vec<_>>(),
    });
    let mut text = serde_json::to_string_pretty(&meta).map_err(|e| CliError::Io(e.to_string()))?;
    text.push('\n');
    write_file(dir, "metadata.json", text.as_bytes())
}

/// Runs one command and returns whether a verification failed, with the
/// summary line.
fn run(cli: &Cli) -> Result<(bool, String), CliError> {
    let started = unix_ms();
    let threads = threads_from_env()?;
    if let Some(n) = threads {
        ambicon::exec::configure_threads(n);
    }
    let path = cli
        .config
        .as_deref()
        .ok_or_else(|| CliError::Config("MissingConfig: --config <path> is required".into()))?;
    let mut loaded = config::load(path)?;
    if let Some(seed) = cli.seed {
        loaded.config.mc.seed = seed;
    }
    let out_dir = match (&cli.out, &loaded.config.output_dir) {
        (Some(d), _) => d.clone(),
        (None, Some(d)) => loaded.base_dir.join(d),
        (None, None) => PathBuf::from("out"),
    };
    let outcome = match cli.command {
        Command::FirstBest => commands::first_best(&loaded)?,
        Command::SecondBest => commands::second_best(&loaded)?,
        Command::Pde => commands::pde(&loaded)?,
        Command::Simulate => commands::simulate(&loaded)?,
        Command::GateauxCheck => commands::gateaux_check(&loaded)?,
        Command::Crosscheck => commands::crosscheck(&loaded)?,
        Command::Sweep => commands::sweep(&loaded)?,
    };
    write_artifacts(&out_dir, cli.command, &loaded.config, &outcome, started, threads)?;
    Ok((outcome.failed, outcome.summary))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok((failed, summary)) => {
            if !cli.quiet {
                println!("{summary}");
            }
            if failed {
                eprintln!("{}: verification failed, see report.csv", cli.command.name());
                ExitCode::from(4)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code())
        }
    }
}
