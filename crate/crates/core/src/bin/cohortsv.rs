use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use cohortsv::features::Condition;
use cohortsv::pipeline::{self, DeciderKind, ExperimentConfig, Layout};

#[derive(Parser)]
#[command(name = "cohortsv", version, about = "Cohort-based speaker verification experiments")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config (TOML). The bundled defaults are used when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override the master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Work directory (overrides experiment.work_dir).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Condition C1..C7 (overrides experiment.condition).
    #[arg(long, global = true)]
    condition: Option<Condition>,
    /// Decider for train-decider / evaluate (default: first configured).
    #[arg(long, global = true)]
    decider: Option<DeciderKind>,
}

#[derive(Subcommand)]
enum Command {
    Synth,
    TrainUbm,
    Adapt,
    Cluster,
    CostCurve,
    Score,
    /// Assemble features (all conditions unless --condition is given).
    Features,
    TrainDecider,
    Evaluate,
    RunAll,
}

fn run(cli: Cli) -> cohortsv::Result<()> {
    let mut cfg = match &cli.common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::bundled(),
    };
    if let Some(seed) = cli.common.seed {
        cfg = cfg.with_seed(seed);
    }
    if let Some(c) = cli.common.condition {
        cfg.experiment.condition = c.to_string();
    }
    cfg.validate()?;
    let layout = Layout::new(cli.common.out.clone().unwrap_or_else(|| cfg.experiment.work_dir.clone()));
    let condition = cfg.condition()?;
    let decider = cli
        .common
        .decider
        .or_else(|| cfg.experiment.deciders.first().copied())
        .unwrap_or(DeciderKind::Svm);

    match cli.command {
        Command::Synth => pipeline::synth(&cfg, &layout)?,
        Command::TrainUbm => {
            pipeline::train_ubm(&cfg, &layout)?;
        }
        Command::Adapt => {
            pipeline::adapt(&cfg, &layout)?;
        }
        Command::Cluster => {
            pipeline::cluster(&cfg, &layout)?;
        }
        Command::CostCurve => {
            for (k, j) in pipeline::cost_curve(&cfg, &layout)? {
                println!("{k}\t{j:.6}");
            }
        }
        Command::Score => pipeline::score(&cfg, &layout)?,
        Command::Features => match cli.common.condition {
            Some(c) => pipeline::features(&cfg, &layout, &[c])?,
            None => pipeline::features(&cfg, &layout, &Condition::ALL)?,
        },
        Command::TrainDecider => {
            pipeline::train_decider(&cfg, &layout, decider, condition)?;
        }
        Command::Evaluate => {
            let out = pipeline::evaluate(&cfg, &layout, decider, condition)?;
            println!("{decider} {condition} EER {:.4}%", 100.0 * out.report.eer);
            println!("baseline LLR EER {:.4}%", 100.0 * out.baseline.eer);
        }
        Command::RunAll => {
            let summary = pipeline::run_all(&cfg, &layout)?;
            print!("{}", summary.to_csv());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
