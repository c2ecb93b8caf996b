//! `qcnn`: reproducible, file-backed QCNN experiments.

mod commands;
mod config;
mod dataset;
mod sweep;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::commands::{BaselineArgs, EncodeDumpArgs, EntropyArgs, SynthArgs, TrainArgs};
use crate::config::Usage;
use crate::sweep::SweepArgs;

#[derive(Parser)]
#[command(name = "qcnn", version, about = "Quantum convolutional neural network experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one QCNN and write its report.
    Train(TrainArgs),
    /// Train a grid of ansatz x noise x intensity x seed and tabulate accuracy.
    Sweep(SweepArgs),
    /// Entanglement entropy of a conv unit or of a QCNN readout qubit.
    Entropy(EntropyArgs),
    /// Train a parameter-matched classical CNN.
    Baseline(BaselineArgs),
    /// Write a synthetic two-class Gaussian feature CSV.
    Synth(SynthArgs),
    /// Print or write the encoded state of one feature vector.
    EncodeDump(EncodeDumpArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Train(a) => commands::cmd_train(a),
        Command::Sweep(a) => sweep::cmd_sweep(a),
        Command::Entropy(a) => commands::cmd_entropy(a),
        Command::Baseline(a) => commands::cmd_baseline(a),
        Command::Synth(a) => commands::cmd_synth(a),
        Command::EncodeDump(a) => commands::cmd_encode_dump(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.is::<Usage>() => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
