//! `vma`: simulate viscoelastic actuator experiments, extract
//! force-velocity curves, and identify model parameters.

use clap::{Parser, Subcommand};

use vma_cli::commands::{self, GlobalOpts};

#[derive(Debug, Parser)]
#[command(
    name = "vma",
    version,
    about = "Viscoelastic actuator modeling toolkit",
    propagate_version = true
)]
struct Cli {
    #[command(flatten)]
    global: GlobalOpts,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build a measurement-session strain profile.
    Protocol(commands::ProtocolArgs),
    /// Integrate a model chain along a strain profile.
    Simulate(commands::SimulateArgs),
    /// Extract a force-velocity curve from a trace.
    Analyze(commands::AnalyzeArgs),
    /// Identify model parameters from a curve.
    Fit(commands::FitArgs),
    /// Tabulate a model's analytic force-velocity curve.
    Fv(commands::FvArgs),
    /// Run a parameter-sweep study over analytic curves.
    Sweep(commands::SweepArgs),
    /// Attach a pressure log to a machine trace.
    Sync(commands::SyncArgs),
}

fn main() {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Protocol(a) => commands::cmd_protocol(&cli.global, a),
        Command::Simulate(a) => commands::cmd_simulate(&cli.global, a),
        Command::Analyze(a) => commands::cmd_analyze(&cli.global, a),
        Command::Fit(a) => commands::cmd_fit(&cli.global, a),
        Command::Fv(a) => commands::cmd_fv(&cli.global, a),
        Command::Sweep(a) => commands::cmd_sweep(&cli.global, a),
        Command::Sync(a) => commands::cmd_sync(&cli.global, a),
    };
    if let Err(failure) = result {
        eprintln!("error: {failure}");
        std::process::exit(failure.exit_code());
    }
}
