//! `mkdvlab`: runs one experiment, writes `<command>.csv` and `summary.json`.
//!
//! Exit status: 0 on success, 1 on invalid input, 2 when a computation
//! fails a numerical-health check (ambiguous inertia, optimizer
//! non-convergence, blow-up guard).

mod commands;
mod config;
mod output;

use std::process::ExitCode;

use clap::Parser;
use config::{Cli, ConfigError, ExperimentConfig};

#[derive(Debug)]
pub enum RunError {
    Config(ConfigError),
    Core(mkdv_core::Error),
    Io(String),
}

impl From<ConfigError> for RunError {
    fn from(e: ConfigError) -> Self {
        RunError::Config(e)
    }
}

impl From<mkdv_core::Error> for RunError {
    fn from(e: mkdv_core::Error) -> Self {
        RunError::Core(e)
    }
}

impl RunError {
    fn exit_code(&self) -> u8 {
        match self {
            RunError::Core(e) if e.is_numerical() => 2,
            _ => 1,
        }
    }
}

impl std::fmt::Display for RunError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RunError::Config(e) => write!(f, "{e}"),
            RunError::Core(e) => write!(f, "{e}"),
            RunError::Io(e) => write!(f, "cli::output: {e}"),
        }
    }
}

fn configure_threads() -> Result<(), RunError> {
    let Ok(raw) = std::env::var("MKDVLAB_THREADS") else {
        return Ok(());
    };
    let threads: usize = raw.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| {
        ConfigError(format!(
            "MKDVLAB_THREADS must be a positive integer, got '{raw}'"
        ))
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| RunError::Io(format!("cannot size the worker pool: {e}")))
}

fn run(cli: &Cli) -> Result<u8, RunError> {
    configure_threads()?;
    let cfg = ExperimentConfig::from_cli(cli)?;
    let outcome = commands::run(&cfg)?;
    let csv = outcome.table.to_csv(&cfg.describe());
    let mut summary = serde_json::json!({
        "command": cfg.command.name(),
        "version": env!("CARGO_PKG_VERSION"),
        "parameters": cfg.describe(),
        "certified": outcome.uncertified.is_none(),
    });
    if let (Some(target), serde_json::Value::Object(extra)) =
        (summary.as_object_mut(), outcome.summary)
    {
        target.extend(extra);
    }
    match &cfg.output_path {
        Some(dir) => {
            output::write_outputs(dir, cfg.command.name(), &csv, &summary)
                .map_err(|e| RunError::Io(format!("cannot write to {}: {e}", dir.display())))?;
            println!("{}", outcome.report);
        }
        None => {
            print!("{csv}");
            eprintln!("{}", outcome.report);
            eprintln!(
                "{}",
                serde_json::to_string_pretty(&summary).expect("summary serializes")
            );
        }
    }
    if let Some(msg) = outcome.uncertified {
        eprintln!("error: {msg}");
        return Ok(2);
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
