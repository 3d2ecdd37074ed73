use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use samcmc_harness::commands;

#[derive(Parser)]
#[command(name = "samcmc", version, about = "Stochastic approximation MCMC experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check the gain schedule against every step-size clause (exit 1 on failure).
    Validate { config: PathBuf },
    /// Run SAMC on a finite chain and write trace.csv / summary.json.
    RunSamc { config: PathBuf },
    /// Run stochastic approximation MLE on the Gaussian missing-data toy.
    RunSamle { config: PathBuf },
    /// Print exact ω, θ*, h(0), F(θ*), Q and Γ.
    Oracle { config: PathBuf },
    /// Replicated runs compared against the oracle covariance; writes report.json.
    Efficiency { config: PathBuf },
}

fn run(cli: &Cli, out: &mut impl Write, err: &mut impl Write) -> u8 {
    let result = match &cli.command {
        Command::Validate { config } => commands::validate(config, out).map(|ok| if ok { 0 } else { 1 }),
        Command::RunSamc { config } => commands::run_samc(config, out).map(|_| 0),
        Command::RunSamle { config } => commands::run_samle(config, out).map(|_| 0),
        Command::Oracle { config } => commands::oracle(config, out).map(|_| 0),
        Command::Efficiency { config } => commands::efficiency(config, out).map(|_| 0),
    };
    result.unwrap_or_else(|e| {
        let _ = writeln!(err, "error: {e}");
        2
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    ExitCode::from(run(&cli, &mut std::io::stdout().lock(), &mut std::io::stderr().lock()))
}
