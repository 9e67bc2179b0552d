//! `twohop`: dataset building, training, evaluation and ablations for
//! two-hop cross-document relation extraction.

mod ablate;
mod data;
mod gradcheck;
mod manifest;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "twohop",
    version,
    about = "Two-hop cross-document relation extraction"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic records file and KB.
    Synth(data::SynthArgs),
    /// Turn QA records and KB triples into train/val/test instance files.
    BuildDataset(data::BuildArgs),
    /// Train a model for one or more seeds.
    Train(run::TrainArgs),
    /// Score a checkpoint on an instance file, optionally against a second one.
    Eval(run::EvalArgs),
    /// Median-of-five runs over a grid of layer counts and edge toggles.
    Ablate(ablate::AblateArgs),
    /// Compare analytic gradients with central finite differences.
    Gradcheck(gradcheck::GradcheckArgs),
}

/// Config file plus `key=value` overrides shared by `train` and `ablate`.
#[derive(Args, Clone, Debug, Default)]
pub struct ConfigArgs {
    /// Flat `key = value` config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override one config key; repeatable, applied after --config.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

impl ConfigArgs {
    pub fn load(&self) -> anyhow::Result<twohop::training::TrainConfig> {
        let mut cfg = twohop::training::TrainConfig::default();
        if let Some(path) = &self.config {
            let text = std::fs::read_to_string(path)
                .map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))?;
            cfg.apply_text(&text, &path.display().to_string())?;
        }
        for kv in &self.overrides {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| anyhow::anyhow!("--set expects KEY=VALUE, got {kv:?}"))?;
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth(a) => data::synth(a),
        Command::BuildDataset(a) => data::build_dataset(a),
        Command::Train(a) => run::train(a),
        Command::Eval(a) => run::eval(a),
        Command::Ablate(a) => ablate::ablate(a),
        Command::Gradcheck(a) => gradcheck::gradcheck(a),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
