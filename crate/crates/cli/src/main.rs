//! `factmask` command-line driver.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use factmask::ErrorKind;

#[derive(Parser, Debug)]
#[command(
    name = "factmask",
    version,
    about = "Synthesize inconsistent summaries and evaluate consistency classifiers"
)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct GlobalArgs {
    /// TOML config file; defaults apply when omitted.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,

    /// Override a config key, e.g. `--set masking.gamma_a=0.4`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,

    /// Global seed; replaces `seed` from the config.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory shared by all verbs.
    #[arg(long, short, default_value = "out", global = true)]
    out: PathBuf,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Split the corpus into infiller-training and generation halves.
    Split,
    /// Print model inputs for a few pairs.
    MaskPreview {
        /// Only this pair id.
        #[arg(long)]
        pair: Option<String>,
        /// Number of pairs to show.
        #[arg(long, default_value_t = 3)]
        limit: usize,
        /// Only this method (mfma, msm, mf).
        #[arg(long)]
        method: Option<String>,
    },
    /// Train the infiller on the training half.
    TrainInfiller,
    /// Generate negatives for the generation half.
    Generate,
    /// Merge references and negatives into the classifier dataset.
    BuildDataset {
        /// Delete the generated negatives once the dataset is written.
        #[arg(long)]
        purge_generated: bool,
    },
    /// Train the classifier and select a checkpoint.
    TrainClassifier,
    /// Score the configured benchmarks with the selected checkpoint.
    Evaluate,
    /// Run the mask-ratio grid.
    Sweep,
    /// Fit validation score against distance and diversity.
    Analyze {
        /// `distance` or `diversity`; both when omitted.
        #[arg(long)]
        field: Option<String>,
    },
    /// Write CSV and SVG plots for sweep and evaluation outputs.
    Plot,
    /// Every stage from split to evaluation.
    Run {
        /// Delete the generated negatives after the classifier is trained.
        #[arg(long)]
        purge_generated: bool,
    },
}

fn exit_code(err: &anyhow::Error) -> u8 {
    let kind = err
        .chain()
        .find_map(|e| e.downcast_ref::<factmask::Error>())
        .map(factmask::Error::kind);
    match kind {
        Some(ErrorKind::Config) => 1,
        Some(ErrorKind::Backend) => 3,
        Some(ErrorKind::Data) | None => 2,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return if usage {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match commands::dispatch(&cli.global, &cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
