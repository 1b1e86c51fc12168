use std::path::PathBuf;
use std::process::ExitCode;

use anonvad::model::ModelKind;
use anonvad::variant::VariantKind;
use anonvad_cli::{load_config, run, CliError, Overrides, Stage};
use clap::{Parser, Subcommand};

const WORKERS_ENV: &str = "ANONVAD_WORKERS";

/// Privacy-preserving video anomaly detection with convolutional autoencoders.
#[derive(Parser)]
#[command(name = "anonvad", version, after_help = "Set ANONVAD_WORKERS to limit worker threads.")]
struct Cli {
    #[command(subcommand)]
    stage: Command,
    /// JSON run config; built-in desk-scale defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory for all artifacts.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[arg(long, global = true)]
    variant: Option<VariantKind>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    epochs: Option<usize>,
    /// cae3d or cae2d.
    #[arg(long, global = true)]
    model: Option<ModelKind>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Render the synthetic train and test corpus.
    Synth,
    /// Render the privacy variant and cut windows.
    Preprocess,
    /// Train the autoencoder on normal training windows.
    Train,
    /// Score test windows by reconstruction error.
    Score,
    /// Compute ROC and PR metrics from the scores.
    Eval,
    /// Check artifact provenance and summarize the run.
    Report,
    /// Run every stage in order.
    All,
}

impl From<Command> for Stage {
    fn from(c: Command) -> Stage {
        match c {
            Command::Synth => Stage::Synth,
            Command::Preprocess => Stage::Preprocess,
            Command::Train => Stage::Train,
            Command::Score => Stage::Score,
            Command::Eval => Stage::Eval,
            Command::Report => Stage::Report,
            Command::All => Stage::All,
        }
    }
}

fn configure_workers() -> Result<(), CliError> {
    let Ok(value) = std::env::var(WORKERS_ENV) else {
        return Ok(());
    };
    let n: usize = value
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Usage(format!("{WORKERS_ENV} must be a positive integer, got `{value}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Usage(format!("cannot start {n} workers: {e}")))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let overrides = Overrides {
        variant: cli.variant,
        seed: cli.seed,
        epochs: cli.epochs,
        model: cli.model,
    };
    let result = configure_workers()
        .and_then(|_| load_config(cli.config.as_deref(), &overrides))
        .and_then(|config| run(cli.stage.into(), &config, &cli.out));
    match result {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("anonvad: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
