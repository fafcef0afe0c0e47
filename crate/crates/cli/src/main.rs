use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use tweetact_cli::{commands, RunConfig};

/// Offline activity recognition from tweets.
#[derive(Parser)]
#[command(name = "tweetact", version)]
struct Cli {
    #[command(flatten)]
    shared: Shared,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Shared {
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Override a setting, e.g. `--set train.epochs=5`. Repeatable.
    #[arg(long = "set", global = true, value_name = "SECTION.KEY=VALUE")]
    sets: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Clean, label, window and split a raw corpus.
    Prepare {
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        rules: Option<PathBuf>,
        /// Skip malformed lines instead of aborting.
        #[arg(long)]
        lenient: bool,
    },
    /// Train a model on a prepared corpus.
    Train {
        /// Directory written by `prepare`.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        arch: Option<String>,
        /// Comma-separated subset of pos,time,history; or none/all.
        #[arg(long)]
        features: Option<String>,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Score a checkpoint on a split file.
    Eval {
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        split: Option<PathBuf>,
    },
    /// Activity distributions for records in a JSON Lines file.
    Predict {
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Aggregate follower distributions into account profiles.
    Profile {
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Finite-difference gradient checks.
    Gradcheck {
        /// Architecture name or `all`. Repeatable.
        #[arg(long)]
        arch: Vec<String>,
        #[arg(long)]
        instances: Option<u64>,
    },
    /// Generate a synthetic raw corpus.
    Synth {
        #[arg(long)]
        mode: Option<String>,
        #[arg(long)]
        num_examples: Option<usize>,
    },
}

fn push<T: ToString>(sets: &mut Vec<String>, key: &str, v: Option<T>) {
    if let Some(v) = v {
        let v = v.to_string();
        // paths and names are strings; quoting keeps them from parsing as numbers
        sets.push(format!("{key}={}", toml::Value::String(v)));
    }
}

fn push_raw<T: ToString>(sets: &mut Vec<String>, key: &str, v: Option<T>) {
    if let Some(v) = v {
        sets.push(format!("{key}={}", v.to_string()));
    }
}

fn path(p: Option<PathBuf>) -> Option<String> {
    p.map(|p| p.display().to_string())
}

fn run(cli: Cli) -> Result<()> {
    let mut sets = cli.shared.sets;
    push_raw(&mut sets, "run.seed", cli.shared.seed);
    push(&mut sets, "run.out", path(cli.shared.out));
    match &cli.command {
        Command::Prepare { input, rules, lenient } => {
            push(&mut sets, "prepare.input", path(input.clone()));
            push(&mut sets, "prepare.rules", path(rules.clone()));
            push_raw(&mut sets, "prepare.strict", lenient.then_some(false));
        }
        Command::Train {
            data,
            arch,
            features,
            epochs,
        } => {
            push(&mut sets, "train.data", path(data.clone()));
            push(&mut sets, "model.architecture", arch.clone());
            push(&mut sets, "model.features", features.clone());
            push_raw(&mut sets, "train.epochs", *epochs);
        }
        Command::Eval { model, split } => {
            push(&mut sets, "eval.model", path(model.clone()));
            push(&mut sets, "eval.split", path(split.clone()));
        }
        Command::Predict { model, input } => {
            push(&mut sets, "predict.model", path(model.clone()));
            push(&mut sets, "predict.input", path(input.clone()));
        }
        Command::Profile { input } => push(&mut sets, "profile.input", path(input.clone())),
        Command::Gradcheck { arch, instances } => {
            if !arch.is_empty() {
                let list = toml::Value::Array(arch.iter().map(|a| toml::Value::String(a.clone())).collect());
                sets.push(format!("gradcheck.architectures={list}"));
            }
            push_raw(&mut sets, "gradcheck.instances", *instances);
        }
        Command::Synth { mode, num_examples } => {
            push(&mut sets, "synth.mode", mode.clone());
            push_raw(&mut sets, "synth.num_examples", *num_examples);
        }
    }
    let cfg = RunConfig::load(cli.shared.config.as_deref(), std::env::vars(), &sets)?;
    match cli.command {
        Command::Prepare { .. } => commands::prepare(&cfg).map(drop),
        Command::Train { .. } => commands::train(&cfg).map(drop),
        Command::Eval { .. } => commands::eval(&cfg).map(drop),
        Command::Predict { .. } => commands::predict(&cfg).map(drop),
        Command::Profile { .. } => commands::profile(&cfg).map(drop),
        Command::Gradcheck { .. } => commands::gradcheck(&cfg).map(drop),
        Command::Synth { .. } => commands::synth(&cfg).map(drop),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", tweetact_cli::log::line("error", &[("message", &format!("{e:#}"))]));
            ExitCode::FAILURE
        }
    }
}
