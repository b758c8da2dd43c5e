mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{ExperimentConfig, Overrides};
use error::CliResult;

/// Source-identification pretraining and segmentation experiments.
#[derive(Debug, Parser)]
#[command(name = "srcid", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// TOML experiment config; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Root seed; replaces every seed in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Directory that receives run directories.
    #[arg(long, global = true, default_value = "runs")]
    out: PathBuf,

    /// Model checkpoint to start from or evaluate.
    #[arg(long, global = true)]
    checkpoint: Option<PathBuf>,

    /// Labeled training patients used for fine-tuning.
    #[arg(long, global = true)]
    labeled_budget: Option<usize>,

    /// Enable Mixup during fine-tuning.
    #[arg(long, global = true)]
    mixup: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic phantom dataset.
    GeneratePhantom,
    /// Pretrain on the configured proxy task.
    Pretrain,
    /// Fine-tune for segmentation, from --checkpoint or from scratch.
    Finetune,
    /// Score a segmentation checkpoint on the test split.
    Evaluate,
    /// Noise sweep on ambiguous single-mixture reconstruction.
    Solvability,
    /// Downstream Dice across source-count settings.
    AblateSources,
    /// Brain-mask overlap of random cross-patient slice pairs.
    OverlapStats,
    /// Paired t-test between two evaluation reports.
    Compare { report_a: PathBuf, report_b: PathBuf },
}

fn run(cli: Cli) -> CliResult<()> {
    let overrides = Overrides {
        seed: cli.seed,
        labeled_budget: cli.labeled_budget,
        mixup: cli.mixup,
    };
    let load = || -> CliResult<ExperimentConfig> {
        Ok(ExperimentConfig::load(cli.config.as_deref())?.resolve(&overrides))
    };
    let ckpt = cli.checkpoint.as_deref();
    let out = &cli.out;
    match &cli.command {
        Command::GeneratePhantom => {
            let dir = commands::generate_phantom(&load()?, out)?;
            println!("{}", dir.display());
        }
        Command::Pretrain => println!("{}", commands::cmd_pretrain(&load()?, out)?.display()),
        Command::Finetune => println!("{}", commands::cmd_finetune(&load()?, out, ckpt)?.display()),
        Command::Evaluate => println!("{}", commands::cmd_evaluate(&load()?, out, ckpt)?.display()),
        Command::Solvability => println!("{}", commands::cmd_solvability(&load()?, out)?.display()),
        Command::AblateSources => println!("{}", commands::cmd_ablate_sources(&load()?, out)?.display()),
        Command::OverlapStats => println!("{}", commands::cmd_overlap_stats(&load()?, out)?.display()),
        Command::Compare { report_a, report_b } => {
            let (path, report) = commands::cmd_compare(report_a, report_b, out)?;
            for ((name, t), dir) in report.class_names.iter().zip(&report.tests).zip(&report.direction) {
                eprintln!("{name}: mean diff {:+.4}, p = {:.4} ({dir:?})", t.mean_diff, t.p);
            }
            println!("{}", path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
