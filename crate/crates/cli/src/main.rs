use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fracwave_cli::{parse_config_for, run, Command};

#[derive(Parser)]
#[command(name = "fracwave", version, about = "Stochastic wave equation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Picard solution ensemble
    Simulate(RunArgs),
    /// Time and space Hölder exponents of a solution ensemble
    Holder(RunArgs),
    /// Fourier pairs, decomposition and beta identity checks
    KernelsVerify(RunArgs),
    /// Chaos second moments and the divergence scan
    Chaos(RunArgs),
    /// Condition registry report and feasibility scan
    Params(RunArgs),
    /// Lag covariance of sampled noise against the exact law
    Covariance(RunArgs),
}

#[derive(clap::Args)]
struct RunArgs {
    /// TOML experiment description
    #[arg(long)]
    config: PathBuf,
    /// Master seed, overrides the config
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory, overrides the config
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, args) = match cli.command {
        Cmd::Simulate(a) => (Command::Simulate, a),
        Cmd::Holder(a) => (Command::Holder, a),
        Cmd::KernelsVerify(a) => (Command::KernelsVerify, a),
        Cmd::Chaos(a) => (Command::Chaos, a),
        Cmd::Params(a) => (Command::Params, a),
        Cmd::Covariance(a) => (Command::Covariance, a),
    };
    let text = match std::fs::read_to_string(&args.config) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", args.config.display());
            return ExitCode::from(2);
        }
    };
    let mut config = match parse_config_for(command, &text) {
        Ok(c) => c,
        Err(e) => {
            eprint!("error: {e}");
            return ExitCode::from(2);
        }
    };
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(out) = args.out {
        config.out = out;
    }
    fracwave_cli::run::print_warnings(&config, std::io::stderr());
    match run(&config) {
        Ok(summary) => {
            for f in &summary.files {
                println!("{}", summary.out.join(f).display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
