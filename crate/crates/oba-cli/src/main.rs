//! `oba`: generate synthetic data, screen features, train the bundle,
//! evaluate against baselines, predict, ablate, and plot. Exit codes:
//! 0 success, 1 usage, 2 data error, 3 numeric failure. Diagnostics go to
//! stderr; results go to files only.

mod commands;
mod config;
mod manifest;
mod plot;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(
    name = "oba",
    version,
    about = "Ordinal boosting autoencoder for precipitation bias correction"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Generate a synthetic NWP-like dataset (OBADS001)
    Gen {
        /// Config file; defaults apply when absent
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output dataset file
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: u64,
    },
    /// Rank features by |Pearson r| against the label and write the kept list
    Screen {
        #[arg(long)]
        data: PathBuf,
        /// Output selection text file
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Train the model bundle (all stages, or retrain one stage of an
    /// existing bundle)
    Train {
        #[arg(long)]
        data: PathBuf,
        /// Bundle directory (created if needed)
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = Stage::All)]
        stage: Stage,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: u64,
    },
    /// Score BI, LR, SRA and OBA on the held-out part of the data
    Eval {
        #[arg(long)]
        data: PathBuf,
        /// Bundle directory from `train`
        #[arg(long)]
        model: PathBuf,
        /// Output report CSV
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Write per-sample corrected precipitation for every sample in the file
    Predict {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        model: PathBuf,
        /// Output CSV (sample_index,prediction_mm)
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Retrain the pipeline across a parameter sweep and score each point
    Ablate {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum)]
        param: AblateParam,
        /// Comma-separated parameter values, e.g. 0,0.01,0.05
        #[arg(long)]
        values: String,
        /// Output ablation CSV
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: u64,
    },
    /// Render an SVG plot (800×500)
    Plot {
        #[arg(long, value_enum)]
        kind: PlotKind,
        /// OBADS file (histogram, heatmap) or ablation CSV (ablation)
        #[arg(long)]
        input: PathBuf,
        /// Output SVG file
        #[arg(long)]
        out: PathBuf,
        /// Bundle directory (heatmap only)
        #[arg(long)]
        model: Option<PathBuf>,
        /// Comma-separated sample indices (heatmap only)
        #[arg(long, default_value = "0,1,2")]
        samples: String,
        /// Channel shown as the uncorrected panel (heatmap only)
        #[arg(long, default_value_t = 0)]
        channel: usize,
    },
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
pub enum Stage {
    All,
    Eda,
    Ordinal,
    Selector,
    Sra,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
pub enum AblateParam {
    Sigma,
    Eta,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
pub enum PlotKind {
    Histogram,
    Ablation,
    Heatmap,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(commands::CliError::Usage(msg)) => {
            eprintln!("usage error: {msg}");
            ExitCode::from(1)
        }
        Err(commands::CliError::Core(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numeric() { 3 } else { 2 })
        }
    }
}
