//! `enose` orchestrates the sensor pipeline over CSV streams.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 config or schema error,
//! 3 reference-figure check failure (data is still written).

mod commands;
mod error;
mod reproduce;

use clap::{ArgGroup, Parser, Subcommand};
use enose_core::config::PipelineConfig;
use error::CliError;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "enose",
    about = "Streaming MOX gas-sensor pipeline: conductance conversion, decay-augmented Kalman filtering, deadband onset events, and stereo direction estimation",
    version
)]
struct Cli {
    /// Pipeline config file (TOML with dotted keys per module).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Override one config key, e.g. --set filter.tau_s=inf (repeatable).
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,

    /// Override the scenario seed (simulate and reproduce).
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic stereo recordings from a scenario file.
    Simulate {
        /// Scenario description (TOML).
        scenario: PathBuf,
        /// Directory for left.csv, right.csv, ground_truth.csv, trials.csv.
        #[arg(short, long, value_name = "DIR")]
        output_dir: PathBuf,
    },
    /// Run the processing chain over a CSV stream; the input stage is
    /// detected from the header row and every intermediate is a valid
    /// input for the next stage.
    #[command(group(ArgGroup::new("stage").required(true).args(["to_conductance", "to_filter", "to_events"])))]
    Process {
        input: PathBuf,
        #[arg(short, long, value_name = "PATH")]
        output: PathBuf,
        /// Stop after ratiometric conversion and baseline normalization.
        #[arg(long)]
        to_conductance: bool,
        /// Stop after the Kalman filter.
        #[arg(long)]
        to_filter: bool,
        /// Run through deadband event encoding.
        #[arg(long)]
        to_events: bool,
    },
    /// Classify stimulus direction from paired event streams.
    Stereo {
        /// Left-board event CSV.
        #[arg(long, value_name = "PATH")]
        left: PathBuf,
        /// Right-board event CSV.
        #[arg(long, value_name = "PATH")]
        right: PathBuf,
        /// Trial manifest: trial_id,stimulus_time_s,true_direction.
        #[arg(long, value_name = "PATH")]
        manifest: PathBuf,
        #[arg(short, long, value_name = "PATH")]
        output: PathBuf,
    },
    /// Pick the filter decay constant from a recorded step response.
    SelectTau {
        /// Acquisition or conductance CSV holding one bout onset.
        input: PathBuf,
        /// Candidate decay constants in seconds, ascending.
        #[arg(long, value_delimiter = ',', default_value = "1,3,10,30")]
        candidates: Vec<f64>,
        /// Suppression threshold; defaults to events.theta.
        #[arg(long)]
        threshold: Option<f64>,
        /// Channel to analyze; defaults to the first one in the file.
        #[arg(long)]
        channel: Option<String>,
    },
    /// Regenerate the data behind one reference figure and check it
    /// against the frozen thresholds.
    Reproduce {
        /// One of: kalman, spikes, delays, bitdepth.
        figure: String,
        #[arg(short, long, value_name = "DIR")]
        output_dir: PathBuf,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    let config = PipelineConfig::load(cli.config.as_deref(), &cli.set)?;
    match cli.command {
        Command::Simulate { scenario, output_dir } => {
            commands::simulate(&scenario, &output_dir, cli.seed)
        }
        Command::Process {
            input,
            output,
            to_conductance,
            to_filter,
            to_events,
        } => {
            let stage = if to_conductance {
                enose_core::csvio::Stage::Conductance
            } else if to_filter {
                enose_core::csvio::Stage::Filter
            } else {
                debug_assert!(to_events);
                enose_core::csvio::Stage::Events
            };
            commands::process(&input, &output, stage, &config)
        }
        Command::Stereo {
            left,
            right,
            manifest,
            output,
        } => commands::stereo(&left, &right, &manifest, &output, &config),
        Command::SelectTau {
            input,
            candidates,
            threshold,
            channel,
        } => commands::select_tau(
            &input,
            &candidates,
            threshold.unwrap_or(config.events.theta),
            channel.as_deref(),
            &config,
        ),
        Command::Reproduce { figure, output_dir } => {
            reproduce::run(&figure, &output_dir, &config, cli.seed)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
