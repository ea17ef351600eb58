//! Command-line front end: simulate ripening campaigns, train the model
//! bundle, classify scan logs and run the full evaluation.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use ripetrack::commands;
use ripetrack::config::ExperimentConfig;

#[derive(Parser)]
#[command(
    name = "ripetrack",
    about = "RFID ripening-room monitoring: simulation, training, classification, evaluation",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Experiment configuration (JSON); defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Seed override; takes precedence over the configuration file.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a ripening campaign: scan log + ground truth.
    Simulate {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Train the six threshold classifiers from a recorded campaign.
    Train {
        #[command(flatten)]
        common: CommonArgs,
        /// Scan log CSV produced by `simulate`.
        #[arg(long)]
        scanlog: PathBuf,
        /// Ground-truth CSV produced by `simulate`.
        #[arg(long)]
        truth: PathBuf,
    },
    /// Classify a scan log with a trained model bundle.
    Classify {
        #[command(flatten)]
        common: CommonArgs,
        /// Directory holding the six svm_*.json models.
        #[arg(long)]
        models: PathBuf,
        #[arg(long)]
        scanlog: PathBuf,
    },
    /// Leave-one-fruit-out evaluation with both error analyses.
    Evaluate {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        scanlog: PathBuf,
        #[arg(long)]
        truth: PathBuf,
    },
}

fn load_config(common: &CommonArgs) -> ripetrack::Result<ExperimentConfig> {
    let mut config = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    Ok(config)
}

fn run() -> ripetrack::Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Simulate { common } => {
            let config = load_config(&common)?;
            commands::cmd_simulate(&config, &common.out)?;
        }
        Command::Train {
            common,
            scanlog,
            truth,
        } => {
            let config = load_config(&common)?;
            commands::cmd_train(&config, &scanlog, &truth, &common.out)?;
        }
        Command::Classify {
            common,
            models,
            scanlog,
        } => {
            let config = load_config(&common)?;
            commands::cmd_classify(&config, &models, &scanlog, &common.out)?;
        }
        Command::Evaluate {
            common,
            scanlog,
            truth,
        } => {
            let config = load_config(&common)?;
            commands::cmd_evaluate(&config, &scanlog, &truth, &common.out)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
