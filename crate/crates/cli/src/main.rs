use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use oodseg_cli::commands::{self, LogitSource};
use oodseg_cli::{CliError, RunConfig};

#[derive(Parser)]
#[command(name = "oodseg", version, about = "Anomaly-aware segmentation experiments on synthetic driving scenes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Flat `key = value` config file; missing keys keep their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one config key (repeatable), e.g. `--set n_train=40`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Args)]
struct LossFlags {
    /// topk_ovr | full_ovr | uniform_ce | energy_max
    #[arg(long)]
    variant: Option<String>,
    #[arg(long)]
    k: Option<String>,
    /// Sigmoid slope of the OvR terms.
    #[arg(long)]
    s: Option<String>,
    #[arg(long)]
    gamma: Option<String>,
    #[arg(long = "mix-prob")]
    mix_prob: Option<String>,
    /// on | off
    #[arg(long = "style-align")]
    style_align: Option<String>,
}

impl LossFlags {
    fn pairs(&self) -> Vec<(&'static str, &Option<String>)> {
        vec![
            ("variant", &self.variant),
            ("k", &self.k),
            ("slope", &self.s),
            ("gamma", &self.gamma),
            ("mix_probability", &self.mix_prob),
            ("style_align", &self.style_align),
        ]
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus.
    Synth {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the segmenter from scratch on the corpus train split.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fine-tune the classification head with pasted proxy anomalies.
    Finetune {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        loss: LossFlags,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score the eval split and write reports.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, conflicts_with = "dumps", required_unless_present = "dumps")]
        checkpoint: Option<PathBuf>,
        /// Directory of per-image `NNNN.oodl` logit dumps.
        #[arg(long)]
        dumps: Option<PathBuf>,
        /// A score name or `all`.
        #[arg(long)]
        score: Option<String>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        no_heatmaps: bool,
    },
    /// Fine-tune and evaluate once per K.
    AblateK {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        loss: LossFlags,
        /// Comma-separated K values.
        #[arg(long = "k-list")]
        k_list: Option<String>,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn resolve(common: &Common, flags: &[(&str, &Option<String>)]) -> Result<RunConfig, CliError> {
    let mut cfg = match &common.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| oodseg::Error::io(path, e))?;
            RunConfig::parse(&text)?
        }
        None => RunConfig::default(),
    };
    for item in &common.overrides {
        let (key, value) = item
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("--set expects KEY=VALUE, got {item:?}")))?;
        cfg.set(key.trim(), value.trim())?;
    }
    for (key, value) in flags {
        if let Some(v) = value {
            cfg.set(key, v)?;
        }
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<String, CliError> {
    match cli.command {
        Command::Synth { common, out } => commands::synth(&resolve(&common, &[])?, &out),
        Command::Train { common, corpus, out } => {
            commands::train(&resolve(&common, &[])?, &corpus, &out)
        }
        Command::Finetune {
            common,
            loss,
            corpus,
            checkpoint,
            out,
        } => commands::finetune(&resolve(&common, &loss.pairs())?, &corpus, &checkpoint, &out),
        Command::Eval {
            common,
            corpus,
            checkpoint,
            dumps,
            score,
            out,
            no_heatmaps,
        } => {
            let cfg = resolve(&common, &[("score", &score)])?;
            let source = match (checkpoint, dumps) {
                (Some(c), _) => LogitSource::Checkpoint(c),
                (None, Some(d)) => LogitSource::Dumps(d),
                (None, None) => unreachable!("clap requires one source"),
            };
            commands::eval(&cfg, &corpus, &source, &out, !no_heatmaps)
        }
        Command::AblateK {
            common,
            loss,
            k_list,
            corpus,
            checkpoint,
            out,
        } => {
            let mut flags = loss.pairs();
            flags.push(("k_list", &k_list));
            commands::ablate_k(&resolve(&common, &flags)?, &corpus, &checkpoint, &out)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
