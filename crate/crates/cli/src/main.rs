use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use finhol_cli::report::Report;
use finhol_cli::{run_file, Command};

#[derive(Parser)]
#[command(name = "finhol", version, about = "Holonomy of Finsler manifolds: curvature, algebras and loop experiments")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
    /// Experiment configuration (TOML)
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Report path; CSV tables go next to it. Defaults to stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Overrides the seed in the configuration
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (defaults to all cores)
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true)]
    verbose: bool,
}

#[derive(Subcommand, Clone, Copy)]
enum Cmd {
    /// Validate the model and print g, G and R at points
    Inspect,
    /// Curvature and infinitesimal holonomy algebras
    Algebra,
    /// Loop experiments, Berwald translates and the holonomy algebra
    Holonomy,
    /// Parallel translation along curves
    Transport,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cmd = match cli.command {
        Cmd::Inspect => Command::Inspect,
        Cmd::Algebra => Command::Algebra,
        Cmd::Holonomy => Command::Holonomy,
        Cmd::Transport => Command::Transport,
    };
    let Some(config) = cli.config else {
        eprintln!("finhol: --config <path> is required");
        return ExitCode::from(2);
    };
    if let Some(t) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("finhol: cannot configure {t} threads: {e}");
            return ExitCode::from(2);
        }
    }
    let report: Report = match run_file(cmd, &config, cli.seed, cli.verbose) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("finhol: {e}");
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    if let Some(err) = &report.status.error {
        eprintln!("finhol: {}", err.message);
    }
    for w in &report.warnings {
        if cli.verbose {
            eprintln!("[finhol] warning: {w}");
        }
    }
    if let Err(e) = report.write(cli.out.as_deref()) {
        eprintln!("finhol: {e}");
        return ExitCode::from(e.exit_code() as u8);
    }
    ExitCode::from(report.status.exit_code as u8)
}
