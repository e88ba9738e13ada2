use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use ecosched::Error;

mod commands;

#[derive(Parser, Debug)]
#[command(name = "ecosched", version, about = "Energy-aware GPU cluster scheduling simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate one trace under one policy.
    Run(RunArgs),
    /// One simulation per value of η or of the uniform frequency.
    Sweep(SweepArgs),
    /// Write a synthetic trace.
    GenTrace(GenArgs),
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Trace CSV.
    #[arg(long)]
    trace: PathBuf,
    /// Cluster JSON; a 4 x 8 cluster when absent.
    #[arg(long)]
    cluster: Option<PathBuf>,
    /// Extra hardware profiles (JSON array).
    #[arg(long)]
    profiles: Option<PathBuf>,
    #[arg(long, default_value = "energy_aware")]
    policy: String,
    /// Overrides the cluster's η.
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory, created if absent.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct RunArgs {
    #[command(flatten)]
    common: Common,
    /// Uniform frequency (MHz) for the fixed-frequency baselines.
    #[arg(long)]
    frequency: Option<f64>,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq)]
enum Axis {
    Eta,
    Frequency,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_enum)]
    axis: Axis,
    /// Comma-separated values; a frequency sweep defaults to every supported frequency.
    #[arg(long, value_delimiter = ',', num_args = 0..)]
    values: Option<Vec<f64>>,
    /// Simulations run at once.
    #[arg(long, default_value_t = 1)]
    parallel: usize,
}

#[derive(Args, Debug)]
struct GenArgs {
    #[arg(long)]
    out: PathBuf,
    /// Cluster JSON the trace must fit; a 4 x 8 cluster when absent.
    #[arg(long)]
    cluster: Option<PathBuf>,
    #[arg(long)]
    profiles: Option<PathBuf>,
    #[arg(long, default_value_t = 100)]
    jobs: usize,
    #[arg(long, default_value_t = 120.0)]
    mean_interarrival_s: f64,
    #[arg(long, default_value_t = 600.0)]
    min_duration_s: f64,
    #[arg(long, default_value_t = 7200.0)]
    max_duration_s: f64,
    #[arg(long, default_value_t = 8)]
    max_gpus: u32,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Run(a) => commands::run(&a),
        Command::Sweep(a) => commands::sweep(&a),
        Command::GenTrace(a) => commands::gen_trace(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

/// 2 for a broken internal invariant, 1 for anything the user can fix.
fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Invariant(_) => 2,
        _ => 1,
    }
}
