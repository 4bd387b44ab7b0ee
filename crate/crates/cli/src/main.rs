use clap::{Parser, Subcommand};

use semreduce_cli::commands::{
    cmd_compare, cmd_eval, cmd_generate, cmd_gradcam, cmd_remap, cmd_sensitivity, cmd_train,
    CompareArgs, EvalArgs, GenerateArgs, GradcamArgs, RemapArgs, SensitivityArgs, TrainArgs,
};

/// Steering-model training, attribution and semantic label reduction on
/// procedurally generated road scenes.
#[derive(Parser)]
#[command(name = "semreduce", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic driving dataset
    Generate(GenerateArgs),
    /// Train a model preset on a dataset
    Train(TrainArgs),
    /// Write Grad-CAM overlays and raw heatmaps for selected scenes
    Gradcam(GradcamArgs),
    /// Rank label importance by channel ablation
    Sensitivity(SensitivityArgs),
    /// Re-encode a dataset with the compact 7-class label set
    Remap(RemapArgs),
    /// Compare the all-labels and remapped modular pipelines
    Compare(CompareArgs),
    /// Evaluate a trained model on a dataset split
    Eval(EvalArgs),
}

fn main() {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Generate(args) => cmd_generate(args),
        Command::Train(args) => cmd_train(args),
        Command::Gradcam(args) => cmd_gradcam(args),
        Command::Sensitivity(args) => cmd_sensitivity(args),
        Command::Remap(args) => cmd_remap(args),
        Command::Compare(args) => cmd_compare(args),
        Command::Eval(args) => cmd_eval(args),
    };
    if let Err(e) = result {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
