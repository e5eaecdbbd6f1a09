use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use mecsim_cli::commands::{
    apply_overrides, cmd_gradcheck, cmd_report, cmd_simulate, cmd_train, CliError, EXIT_CONFIG,
};
use mecsim_cli::config::ExperimentConfig;

/// Offloading simulator and policy lab for DAG jobs on an edge cluster.
#[derive(Parser)]
#[command(name = "mecsim", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured policies over the test workload and export
    /// metrics checkpoints, event logs and summaries.
    Simulate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Comma-separated seed list overriding the config.
        #[arg(long)]
        seeds: Option<String>,
        /// JSON-lines trace file supplying the workload.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Train the learning policies; writes per-episode logs and checkpoints.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seeds: Option<String>,
    },
    /// Build the summary tables for a finished run directory.
    Report {
        /// Run directory holding the simulate/train outputs.
        #[arg(long)]
        run: PathBuf,
    },
    /// Verify every analytic gradient against finite differences.
    Gradcheck {
        #[arg(long, default_value_t = 42)]
        seed: u64,
    },
}

fn load_config(path: Option<&PathBuf>) -> Result<ExperimentConfig, CliError> {
    match path {
        Some(p) => ExperimentConfig::load(p).map_err(|e| CliError {
            code: EXIT_CONFIG,
            message: e.to_string(),
        }),
        None => Ok(ExperimentConfig::default()),
    }
}

fn run() -> Result<(), CliError> {
    let cli = Cli::parse();
    match cli.command {
        Command::Simulate {
            config,
            out,
            seeds,
            trace,
        } => {
            let mut cfg = load_config(config.as_ref())?;
            let out_dir = apply_overrides(&mut cfg, out.as_deref(), seeds.as_deref())
                .map_err(|e| CliError {
                    code: EXIT_CONFIG,
                    message: e.to_string(),
                })?;
            cmd_simulate(&cfg, &out_dir, trace.as_deref())
        }
        Command::Train { config, out, seeds } => {
            let mut cfg = load_config(config.as_ref())?;
            let out_dir = apply_overrides(&mut cfg, out.as_deref(), seeds.as_deref())
                .map_err(|e| CliError {
                    code: EXIT_CONFIG,
                    message: e.to_string(),
                })?;
            cmd_train(&cfg, &out_dir)
        }
        Command::Report { run } => cmd_report(&run).map_err(|e| CliError {
            code: EXIT_CONFIG,
            message: e.to_string(),
        }),
        Command::Gradcheck { seed } => cmd_gradcheck(seed),
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code as u8)
        }
    }
}
