use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use dera_cli::{execute, RunOptions, Stage};

#[derive(Parser)]
#[command(name = "dera", version, about = "Run aggregation and market scenarios")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Scenario JSON file.
    #[arg(long, global = true)]
    scenario: Option<PathBuf>,
    /// Output directory; overrides the scenario's `output_dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Write into a non-empty output directory.
    #[arg(long, global = true)]
    force: bool,
    /// Worker threads for grid sweeps (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Welfare ledger of the six participation cases over the γ × g grid.
    Cases,
    /// Aggregate bid curve sampled on the price grid.
    Bidcurve,
    /// Direct versus aggregated wholesale clearing.
    Clear,
    /// Supply function equilibrium and the competitive benchmark.
    Sfe,
    /// Nash deviation scan and best-response dynamics at the equilibrium.
    Nashcheck,
    /// Every stage the scenario configures.
    Run,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let Some(scenario) = cli.scenario else {
        eprintln!("error: --scenario is required");
        return ExitCode::from(2);
    };
    let stage = match cli.command {
        Command::Cases => Some(Stage::Cases),
        Command::Bidcurve => Some(Stage::Bidcurve),
        Command::Clear => Some(Stage::Clear),
        Command::Sfe => Some(Stage::Sfe),
        Command::Nashcheck => Some(Stage::Nashcheck),
        Command::Run => None,
    };
    let opts = RunOptions { scenario, out: cli.out, force: cli.force, threads: cli.threads, stage };
    match execute(&opts) {
        Ok(m) => {
            for f in &m.files {
                println!("{} {}", f.sha256, f.path);
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
