//! `qfsum`: ingest BioASQ data, label candidates, train and evaluate
//! sentence scorers and PPO policies, and write extractive answers.

mod commands;
mod config;
mod run;

use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Io { path: PathBuf, source: std::io::Error, input: bool },
    Core(qfsum_core::Error),
}

impl CliError {
    pub fn input(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
            input: true,
        }
    }

    pub fn output(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
            input: false,
        }
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Core(e) if !e.is_data_error() => 4,
            _ => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Io { path, source, input } => {
                let what = if *input { "cannot read" } else { "cannot write" };
                write!(f, "{what} {}: {source}", path.display())
            }
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl From<qfsum_core::Error> for CliError {
    fn from(e: qfsum_core::Error) -> Self {
        CliError::Core(e)
    }
}

#[derive(Parser)]
#[command(name = "qfsum", version, about = "Query-focused extractive summarisation")]
pub struct Cli {
    /// Worker threads for parallel evaluation (results do not depend on it).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Directory under which each run gets its own subdirectory.
    #[arg(long, global = true, default_value = "runs")]
    pub out_dir: PathBuf,
    /// TOML file with `seed`, `jobs` and `[scorer]`, `[ppo]`, `[corpus]` tables.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Random seed; required by commands that train.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Repeat for more log output.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Clone)]
pub struct CorpusArgs {
    /// BioASQ JSON, or a normalised `.jsonl` corpus written by `ingest`.
    #[arg(long)]
    pub corpus: PathBuf,
    /// Maximum candidate sentences per question.
    #[arg(long)]
    pub cap: Option<usize>,
    /// Candidates labelled positive per question.
    #[arg(long)]
    pub positives: Option<usize>,
}

#[derive(Args, Clone, Default)]
pub struct ScorerArgs {
    /// nnc, nnr, mean-contextual, contextual-lstm, siamese-lstm, sbert-r,
    /// sbert-c, sbert-m-r or sbert-m-c.
    #[arg(long)]
    pub variant: Option<String>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub dropout: Option<f64>,
    #[arg(long)]
    pub hidden_dim: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub max_sentence_len: Option<usize>,
}

#[derive(Args, Clone, Default)]
pub struct PpoArgs {
    #[arg(long)]
    pub timesteps: Option<usize>,
    #[arg(long)]
    pub horizon: Option<usize>,
    #[arg(long)]
    pub minibatches: Option<usize>,
    #[arg(long)]
    pub eval_interval: Option<usize>,
    #[arg(long)]
    pub eval_samples: Option<usize>,
    #[arg(long)]
    pub ppo_learning_rate: Option<f64>,
    #[arg(long)]
    pub policy_hidden: Option<usize>,
}

#[derive(Subcommand)]
pub enum Command {
    /// Normalise a BioASQ file into a corpus dump.
    Ingest {
        #[arg(long)]
        input: PathBuf,
    },
    /// Compute ROUGE-SU4 targets and top-k labels for every candidate.
    Label {
        #[command(flatten)]
        corpus: CorpusArgs,
    },
    /// Train a sentence scorer.
    Train {
        #[command(flatten)]
        corpus: CorpusArgs,
        /// Word2vec text file or contextual embedding file.
        #[arg(long)]
        embeddings: PathBuf,
        /// Label cache from `label`; computed on the fly when omitted.
        #[arg(long)]
        labels: Option<PathBuf>,
        #[command(flatten)]
        scorer: ScorerArgs,
    },
    /// Write answers with a trained scorer, or the firstn baseline.
    Summarize {
        #[command(flatten)]
        corpus: CorpusArgs,
        /// Scorer checkpoint; omit for firstn.
        #[arg(long, requires = "embeddings")]
        model: Option<PathBuf>,
        #[arg(long)]
        embeddings: Option<PathBuf>,
    },
    /// Score a checkpoint on a corpus, or train and score a method on a
    /// seeded 5:1 split.
    Evaluate {
        #[command(flatten)]
        corpus: CorpusArgs,
        /// firstn, random, ppo or a scorer variant.
        #[arg(long, conflicts_with = "model")]
        method: Option<String>,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        embeddings: Option<PathBuf>,
        #[command(flatten)]
        scorer: ScorerArgs,
        #[command(flatten)]
        ppo: PpoArgs,
    },
    /// k-fold cross-validation of a method.
    Crossval {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[arg(long)]
        method: String,
        #[arg(long, default_value_t = 10)]
        k: usize,
        #[arg(long)]
        embeddings: Option<PathBuf>,
        #[command(flatten)]
        scorer: ScorerArgs,
        #[command(flatten)]
        ppo: PpoArgs,
    },
    /// Train a PPO policy on a seeded 5:1 split.
    RlTrain {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[arg(long)]
        embeddings: PathBuf,
        #[command(flatten)]
        ppo: PpoArgs,
    },
    /// Run a trained policy over a corpus.
    RlEval {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[arg(long)]
        policy: PathBuf,
        #[arg(long)]
        embeddings: PathBuf,
    },
    /// ROUGE-SU4 of a candidate text against one or more reference texts.
    Rouge {
        #[arg(long)]
        candidate: PathBuf,
        #[arg(long, required = true, num_args = 1..)]
        reference: Vec<PathBuf>,
    },
    /// Generate a synthetic corpus with matching word vectors.
    Synth {
        #[arg(long, default_value_t = 200)]
        questions: usize,
        #[arg(long, default_value_t = 20)]
        sentences: usize,
        #[arg(long, default_value_t = 6)]
        relevant: usize,
        #[arg(long, default_value_t = 32)]
        dim: usize,
        /// Also write token- and sentence-level contextual embedding files.
        #[arg(long)]
        contextual: bool,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match commands::run(cli) {
        Ok(dir) => {
            println!("{}", dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("qfsum: {}", e.to_string().replace('\n', " "));
            ExitCode::from(e.exit_code())
        }
    }
}
