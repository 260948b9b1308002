//! Config-driven front end for the `finhol` engine: parses experiment files,
//! runs the requested analysis and assembles reproducible reports.

pub mod commands;
pub mod config;
pub mod error;
pub mod report;

use std::path::Path;
use std::sync::Arc;

use finhol::models::builtin_model;

use crate::commands::Ctx;
use crate::config::{AlgebraConfig, ExperimentConfig, HolonomyConfig, InspectConfig, TransportConfig};
use crate::error::CliError;
use crate::report::Report;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Inspect,
    Algebra,
    Holonomy,
    Transport,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Inspect => "inspect",
            Command::Algebra => "algebra",
            Command::Holonomy => "holonomy",
            Command::Transport => "transport",
        }
    }
}

/// Load, resolve and run; the report carries the exit status. A report is
/// produced for every failure after the config has been parsed.
pub fn run_file(cmd: Command, path: &Path, seed: Option<u64>, verbose: bool) -> Result<Report, CliError> {
    let config = ExperimentConfig::load(path)?;
    run_config(cmd, config, seed, verbose)
}

pub fn run_config(
    cmd: Command,
    mut config: ExperimentConfig,
    seed: Option<u64>,
    verbose: bool,
) -> Result<Report, CliError> {
    match cmd {
        Command::Inspect => {
            config.inspect.get_or_insert_with(InspectConfig::default);
        }
        Command::Algebra => {
            config.algebra.get_or_insert_with(AlgebraConfig::default);
        }
        Command::Holonomy => {
            config.holonomy.get_or_insert_with(HolonomyConfig::default);
        }
        Command::Transport => {
            config.transport.get_or_insert_with(TransportConfig::default);
        }
    }
    let config = config.resolve(seed)?;
    let mut report = Report::new(cmd.name(), config.clone());
    let outcome = builtin_model(&config.model).map_err(CliError::from).and_then(|model| {
        let ctx = Ctx { model: Arc::new(model), config: &config, verbose };
        match cmd {
            Command::Inspect => commands::inspect(&ctx, &mut report),
            Command::Algebra => commands::algebra(&ctx, &mut report),
            Command::Holonomy => commands::holonomy(&ctx, &mut report),
            Command::Transport => commands::transport(&ctx, &mut report),
        }
    });
    if let Err(e) = outcome {
        report.fail(&e);
    }
    Ok(report)
}
