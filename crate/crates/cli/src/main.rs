use clap::{Parser, Subcommand, ValueEnum};

use driftblend_cli::commands::{self, PredictMode};
use driftblend_cli::config::RunContext;

/// Lagrangian drifter modeling pipeline: synthetic data generation,
/// residual-network training, velocity prediction, trajectory forecasting
/// and skill evaluation, all driven by one experiment config.
#[derive(Parser)]
#[command(name = "driftblend", version, about)]
struct Cli {
    /// Experiment config (TOML).
    #[arg(long, global = true, default_value = "experiment.toml")]
    config: std::path::PathBuf,
    /// Override every rng seed in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Force single-threaded, deterministically ordered execution.
    #[arg(long, global = true)]
    serial: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    SingleStep,
    Forecast,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic dataset described by [synth].
    Synth,
    /// Split the dataset and train the residual network.
    Train,
    /// Predict along the test side.
    Predict {
        /// single-step velocities along real tracks, or free-running
        /// ensemble forecasts
        #[arg(long, value_enum, default_value = "single-step")]
        mode: Mode,
        /// Skip the network even if a model file exists.
        #[arg(long)]
        baseline_only: bool,
    },
    /// Compute metric reports from existing predictions.
    Evaluate,
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let ctx = match RunContext::from_file(&cli.config, cli.seed, cli.serial) {
        Ok(ctx) => ctx,
        Err(e) => {
            eprintln!("{e}");
            std::process::exit(e.exit_code());
        }
    };
    let result = match cli.command {
        Command::Synth => commands::cmd_synth(&ctx),
        Command::Train => commands::cmd_train(&ctx),
        Command::Predict { mode, baseline_only } => {
            let mode = match mode {
                Mode::SingleStep => PredictMode::SingleStep,
                Mode::Forecast => PredictMode::Forecast,
            };
            commands::cmd_predict(&ctx, mode, baseline_only)
        }
        Command::Evaluate => commands::cmd_evaluate(&ctx),
    };
    if let Err(e) = result {
        eprintln!("{e}");
        std::process::exit(e.exit_code());
    }
}
