//! `ssmp`: synthesise corpora, train, generate, evaluate and align.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ssmp_core::decode::DecodeMode;
use ssmp_core::schedule::SchedulerMode;
use ssmp_core::trainer::LossMode;

#[derive(Debug, Parser)]
#[command(name = "ssmp", version, about = "Trailer shot selection by self-paced masked prediction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic corpus (manifest plus feature files).
    Synth(SynthArgs),
    /// Train a model; writes a checkpoint and training curves.
    Train(TrainArgs),
    /// Decode a trailer for every pair in a corpus.
    Generate(GenerateArgs),
    /// Score generated trailers against the corpus ground truth.
    Evaluate(EvaluateArgs),
    /// Align narrations to trailer shots.
    Align(AlignArgs),
}

#[derive(Debug, Args)]
struct Common {
    /// JSON run config; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed; falls back to the config file, then SSMP_SEED.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    pairs: Option<usize>,
    #[arg(long)]
    movie_shots: Option<usize>,
    #[arg(long)]
    trailer_shots: Option<usize>,
    #[arg(long)]
    dim: Option<usize>,
    /// Standard deviation of the trailer perturbation.
    #[arg(long)]
    noise: Option<f64>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[command(flatten)]
    common: Common,
    /// Corpus manifest.
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    scheduler: Option<SchedulerMode>,
    #[arg(long)]
    loss: Option<LossMode>,
    #[arg(long = "lr")]
    learning_rate: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    max_steps: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// Model width; must equal the corpus feature width.
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    layers: Option<usize>,
    #[arg(long)]
    heads: Option<usize>,
    #[arg(long)]
    ffn_width: Option<usize>,
    /// No progress lines on stderr.
    #[arg(long)]
    quiet: bool,
}

#[derive(Debug, Args)]
struct GenerateArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Decode from the reference labels instead of a model.
    #[arg(long)]
    oracle: bool,
    /// Trailer length for every pair.
    #[arg(long = "j")]
    trailer_len: Option<usize>,
    #[arg(long)]
    mode: Option<DecodeMode>,
    #[arg(long)]
    k_max: Option<usize>,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Directory written by `generate`.
    #[arg(long)]
    generated: Option<PathBuf>,
    /// Deviation radius.
    #[arg(long = "R", visible_alias = "radius")]
    radius: Option<usize>,
}

#[derive(Debug, Args)]
struct AlignArgs {
    #[command(flatten)]
    common: Common,
    /// Alignment problem JSON.
    #[arg(long)]
    problem: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("ssmp: error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
