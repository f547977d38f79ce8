use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};
use sleepcast_cli::pipeline;
use sleepcast_cli::PipelineConfig;

#[derive(Parser)]
#[command(name = "sleepcast", version, about = "Sleep and emotion label prediction from wearable sensor data")]
struct Cli {
    /// JSON pipeline configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Skip masked pre-training and fine-tune from a fresh encoder.
    #[arg(long, global = true)]
    no_pretrain: bool,
    /// Overrides the configured working directory.
    #[arg(long, global = true)]
    workdir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic cohort (sensor, sleep and survey files).
    Synth {
        #[arg(long)]
        users: Option<usize>,
        #[arg(long)]
        days: Option<usize>,
        /// Zero every noise scale.
        #[arg(long)]
        noiseless: bool,
    },
    /// Derive the seven binary labels from survey and sleep records.
    Label,
    /// Build window sequences and daily statistics from sensor files.
    Featurize,
    /// Masked-value pre-training of the transformer encoder.
    Pretrain,
    /// Fine-tune one regression model per survey question.
    Finetune,
    /// Fit the voting ensembles for the sleep labels.
    TrainEnsemble,
    /// Write predictions for all seven labels.
    Predict,
    /// Score predictions with macro F1.
    Score,
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::from_json_file(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(w) = cli.workdir {
        cfg.workdir = w;
    }
    if let Command::Synth { users, days, noiseless } = &cli.command {
        if let Some(u) = users {
            cfg.synth.n_users = *u;
        }
        if let Some(d) = days {
            cfg.synth.n_days = *d;
        }
        if *noiseless {
            cfg.synth = cfg.synth.noiseless();
        }
    }
    let cfg = cfg.finalize()?;
    match cli.command {
        Command::Synth { .. } => {
            let c = pipeline::cmd_synth(&cfg)?;
            println!("wrote {} survey rows and {} sleep rows", c.survey.len(), c.sleep.len());
        }
        Command::Label => println!("labeled {} user-days", pipeline::cmd_label(&cfg)?.len()),
        Command::Featurize => println!("featurized {} user-days", pipeline::cmd_featurize(&cfg)?.0.len()),
        Command::Pretrain => match pipeline::cmd_pretrain(&cfg, cli.no_pretrain)? {
            Some(h) => println!("pre-training loss {:.4} after {} epochs", h.last().copied().unwrap_or(f64::NAN), h.len()),
            None => println!("pre-training skipped"),
        },
        Command::Finetune => {
            for (k, h) in pipeline::cmd_finetune(&cfg, cli.no_pretrain)?.iter().enumerate() {
                println!("Q{} fine-tuning loss {:.4}", k + 1, h.last().copied().unwrap_or(f64::NAN));
            }
        }
        Command::TrainEnsemble => {
            let m = pipeline::cmd_train_ensemble(&cfg)?;
            println!("trained {} ensembles on {} user-days", m.ensembles.len(), m.meta.n_train_rows);
        }
        Command::Predict => println!("predicted {} user-days", pipeline::cmd_predict(&cfg)?.len()),
        Command::Score => {
            let report = pipeline::cmd_score(&cfg)?;
            println!("{report}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
