use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod config;
mod error;
mod experiment;
mod svg;

use error::CliError;

/// Simulate and verify output-feedback consensus of negative-imaginary plant networks.
#[derive(Debug, Parser)]
#[command(name = "ni-consensus", version)]
struct Cli {
    /// Only print errors.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output.dir` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the closed loop and write trajectory.csv, report.json and outputs.svg.
    Simulate(Common),
    /// Run the configured verification checks and write report.json.
    Verify(Common),
    /// Repeat `simulate` for each value of one parameter and tabulate sweep.csv.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// a, b, delta, n, step_s, t_end_s, or a plant parameter.
        #[arg(long)]
        param: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', num_args = 0..)]
        values: Vec<String>,
    },
}

fn out_dir(common: &Common, cfg: &config::ExperimentConfig) -> PathBuf {
    common
        .out
        .clone()
        .or_else(|| cfg.output.dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate(c) => {
            let cfg = config::load_config(&c.config)?;
            commands::simulate(cfg.clone(), &out_dir(&c, &cfg), cli.quiet)
        }
        Command::Verify(c) => {
            let cfg = config::load_config(&c.config)?;
            commands::verify(cfg.clone(), &out_dir(&c, &cfg), cli.quiet)
        }
        Command::Sweep { common, param, values } => {
            let cfg = config::load_config(&common.config)?;
            let values = values
                .iter()
                .map(|s| s.trim())
                .filter(|s| !s.is_empty())
                .map(|s| {
                    s.parse::<f64>()
                        .map_err(|_| CliError::Config(format!("at `--values`: `{s}` is not a number")))
                })
                .collect::<Result<Vec<_>, _>>()?;
            commands::sweep(cfg.clone(), &param, &values, &out_dir(&common, &cfg), cli.quiet)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.quiet { "error" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
