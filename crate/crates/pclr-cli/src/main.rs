//! Command-line harness for the PCLR pipeline: synthetic cohorts,
//! contrastive pre-training, embedding, linear probes, supervised
//! baselines, and report comparison.

mod compare;
mod embed;
mod lineval;
mod pretrain;
mod report;
mod scratch;
mod synth;
mod tasks;

use clap::{Parser, Subcommand};

/// Hyperparameter profile shared by the training commands.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Profile {
    /// Published full-size settings.
    Paper,
    /// Reduced settings that finish on a laptop.
    Desk,
}

#[derive(Parser)]
#[command(name = "pclr", version, about = "Patient contrastive learning for 12-lead ECGs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic ECG cohort with a manifest.
    Synth(synth::SynthArgs),
    /// Pre-train the encoder with the patient-contrastive objective.
    Pretrain(pretrain::PretrainArgs),
    /// Embed every manifest ECG with a trained checkpoint.
    Embed(embed::EmbedArgs),
    /// Fit and evaluate a linear probe on embeddings or metadata features.
    Lineval(lineval::LinevalArgs),
    /// Train the encoder plus a task head with full supervision.
    Scratch(scratch::ScratchArgs),
    /// Merge metric rows from several run reports into one CSV.
    Compare(compare::CompareArgs),
}

fn main() {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Synth(args) => synth::run(args),
        Command::Pretrain(args) => pretrain::run(args),
        Command::Embed(args) => embed::run(args),
        Command::Lineval(args) => lineval::run(args),
        Command::Scratch(args) => scratch::run(args),
        Command::Compare(args) => compare::run(args),
    };
    if let Err(e) = result {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
