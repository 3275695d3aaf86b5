//! `gradreg <subcommand> <config.toml>`
//!
//! Exit status: 0 when every hard invariant held, 1 when one failed, 2 on
//! configuration, input or IO errors. Set `RAYON_NUM_THREADS` to bound the
//! worker threads.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use gradreg::harness::{self, ExperimentConfig};

#[derive(Debug, Parser)]
#[command(name = "gradreg", version, about = "Gradient-regularization experiments")]
struct Cli {
    /// One of approx, pde, rof, quadgap, rademacher, classify, attack-eval.
    subcommand: String,
    /// TOML configuration file.
    config: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let config = match ExperimentConfig::load(&cli.subcommand, &cli.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("gradreg: {e}");
            return ExitCode::from(2);
        }
    };
    let report = match harness::run(&config).and_then(|r| harness::write_report(&r, &config.output).map(|_| r)) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("gradreg: {e}");
            return ExitCode::from(2);
        }
    };
    for c in report.checks.iter().filter(|c| !c.held) {
        let kind = if c.hard { "invariant" } else { "check" };
        eprintln!("{kind} failed: {}: {}", c.name, c.detail);
    }
    println!("{} rows written to {}", report.rows.len(), config.output.display());
    if report.passed() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}
