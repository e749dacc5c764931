use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use depi_cli::config::RunConfig;
use depi_cli::{commands, CliError};

#[derive(Debug, Parser)]
#[command(name = "depi", version, about = "Discrete Euler-Poincare integrators on SO(3)")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Integrate a trajectory and write the CSV and invariant report.
    Simulate(Common),
    /// Run the property suite and write its JSON report.
    Verify {
        #[command(flatten)]
        common: Common,
        /// Scale M by 1.01 after every step of the maps under test (negative control).
        #[arg(long)]
        corrupt_map: bool,
    },
    /// Measure convergence to the continuous flow over the configured step sizes.
    Converge(Common),
}

#[derive(Debug, clap::Args)]
struct Common {
    /// JSON configuration file.
    config: PathBuf,
    /// Directory for output files.
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(v) = std::env::var("DEPI_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| CliError::Usage(format!("DEPI_THREADS must be a positive integer, got {v:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Usage(e.to_string()))
}

fn load(common: &Common) -> Result<RunConfig, CliError> {
    let cfg = RunConfig::load(&common.config)?;
    for w in &cfg.warnings {
        eprintln!("warning: {w}");
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<String, CliError> {
    configure_threads()?;
    match cli.command {
        Command::Simulate(c) => commands::simulate(&load(&c)?, &c.out_dir),
        Command::Verify { common, corrupt_map } => commands::verify(&load(&common)?, &common.out_dir, corrupt_map).map(|(table, _)| table),
        Command::Converge(c) => commands::converge(&load(&c)?, &c.out_dir),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(summary) => {
            println!("{}", summary.trim_end());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
