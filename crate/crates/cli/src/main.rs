//! Command-line front end: generate diagrams, fit models, replicate, detect
//! signal and summarize.

use std::ffi::OsString;
use std::process::ExitCode;

use clap::{ArgAction, Parser, Subcommand};

mod cmd;
mod config;
mod io;
mod manifest;
mod seeds;

#[derive(Parser, Debug)]
#[command(name = "pdrst", version, about = "Replicate persistence diagrams and test their points for topological signal", args_override_self = true)]
struct Cli {
    /// File of `key = value` lines supplying defaults for any flag
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<std::path::PathBuf>,

    /// Root seed; every random stage derives its own stream from it
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// More log output (repeatable)
    #[arg(short, long, global = true, action = ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate the example data sets and their persistence diagrams
    Generate {
        #[command(subcommand)]
        mode: cmd::generate::Mode,
    },
    /// Fit the Gibbs model to one or more diagrams
    Fit(cmd::fit::FitArgs),
    /// Simulate replicates of a diagram under a fitted model
    Replicate(cmd::replicate::ReplicateArgs),
    /// Bagplot p-values for the points of a diagram
    Detect(cmd::detect::DetectArgs),
    /// Group diagram points by lifetime
    Cluster(cmd::cluster::ClusterArgs),
    /// Concatenate diagrams into one labeled CSV
    Superpose(cmd::superpose::SuperposeArgs),
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let seed = cli.seed;
    match cli.command {
        Command::Generate { mode } => cmd::generate::run(mode, seed),
        Command::Fit(a) => cmd::fit::run(a, seed),
        Command::Replicate(a) => cmd::replicate::run(a, seed),
        Command::Detect(a) => cmd::detect::run(a, seed),
        Command::Cluster(a) => cmd::cluster::run(a, seed),
        Command::Superpose(a) => cmd::superpose::run(a, seed),
    }
}

fn main() -> ExitCode {
    let argv: Vec<OsString> = std::env::args_os().collect();
    let argv = match config::expand(argv) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(2);
        }
    };
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).format_timestamp(None).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
