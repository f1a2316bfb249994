mod commands;
mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{CliError, System};
use config::RunConfig;

/// Factorized zero-shot sequence labeling over a task × language grid.
#[derive(Parser, Debug)]
#[command(name = "paramfactor", version)]
struct Cli {
    /// JSON run configuration; omitted sections take defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configuration's top-level seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides paths.out.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic grid with known ground truth.
    Synth,
    /// Train the factorized model on the seen cells.
    Train {
        /// Continue from a checkpoint written by an earlier run.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Score seen cells on their test splits and unseen cells zero-shot.
    Eval {
        #[arg(long, value_enum, default_value = "factor")]
        system: System,
        /// Bayesian model averaging over this many posterior samples.
        #[arg(long)]
        bma: Option<usize>,
    },
    /// Label one CoNLL file with the trained model.
    Predict {
        #[arg(long)]
        task: String,
        #[arg(long)]
        lang: String,
        #[arg(long)]
        corpus: PathBuf,
        /// Precomputed token embeddings for the corpus.
        #[arg(long)]
        embeddings: Option<PathBuf>,
        #[arg(long)]
        bma: Option<usize>,
    },
    /// Predictive entropies on the unseen cells and their correlation with accuracy.
    Entropy {
        #[arg(long, value_enum, default_value = "factor")]
        system: System,
        #[arg(long)]
        bma: Option<usize>,
        /// One row per example instead of per token.
        #[arg(long)]
        per_example: bool,
    },
    /// Run a reference baseline (ns, ls or jm).
    Baseline {
        #[arg(long, value_enum)]
        system: System,
    },
}

fn load_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let (mut cfg, base) = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
            let cfg = RunConfig::from_json(&text)
                .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
            let base = path.parent().unwrap_or(Path::new("")).to_path_buf();
            (cfg, base)
        }
        None => (RunConfig::default(), PathBuf::new()),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    cfg.resolve_paths(&base);
    if let Some(out) = &cli.out {
        cfg.paths.out = out.clone();
    }
    cfg.validate().map_err(CliError::Usage)?;
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let cfg = load_config(cli)?;
    match &cli.command {
        Command::Synth => commands::synth(&cfg),
        Command::Train { resume } => commands::train(&cfg, resume.as_deref()),
        Command::Eval { system, bma } => commands::eval(&cfg, *system, *bma),
        Command::Predict {
            task,
            lang,
            corpus,
            embeddings,
            bma,
        } => commands::predict(&cfg, task, lang, corpus, embeddings.as_deref(), *bma),
        Command::Entropy {
            system,
            bma,
            per_example,
        } => commands::entropy(&cfg, *system, *bma, *per_example),
        Command::Baseline { system } => commands::baseline(&cfg, *system),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
