//! Command-line pipeline: every stage reads artifacts from the output
//! directory (or explicit paths), writes its own artifacts plus a manifest,
//! and exits with 0 (ok), 2 (missing input), 3 (validation failure) or 4
//! (internal invariant breach).

mod commands;
pub mod config;
pub mod manifest;
mod report;

use std::fmt;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_MISSING_INPUT: i32 = 2;
pub const EXIT_VALIDATION: i32 = 3;
pub const EXIT_INTERNAL: i32 = 4;

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub stage: String,
    pub message: String,
}

impl CliError {
    pub fn missing(stage: &str, path: &Path, err: impl fmt::Display) -> Self {
        Self {
            code: EXIT_MISSING_INPUT,
            stage: stage.into(),
            message: format!("missing input {}: {err}", path.display()),
        }
    }

    pub fn validation(stage: &str, message: impl Into<String>) -> Self {
        Self {
            code: EXIT_VALIDATION,
            stage: stage.into(),
            message: message.into(),
        }
    }

    pub fn internal(stage: &str, message: impl Into<String>) -> Self {
        Self {
            code: EXIT_INTERNAL,
            stage: stage.into(),
            message: message.into(),
        }
    }

    /// Classifies a library error raised while running `stage`.
    pub fn from_lib(stage: &str, err: Error) -> Self {
        match &err {
            Error::Io { path, source } if source.kind() == std::io::ErrorKind::NotFound => {
                Self::missing(stage, path, source)
            }
            Error::Io { .. } => Self::internal(stage, err.to_string()),
            _ => Self::validation(stage, err.to_string()),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}] {}", self.stage, self.message)
    }
}

pub(crate) trait StageContext<T> {
    fn stage(self, stage: &str) -> Result<T, CliError>;
}

impl<T> StageContext<T> for crate::Result<T> {
    fn stage(self, stage: &str) -> Result<T, CliError> {
        self.map_err(|e| CliError::from_lib(stage, e))
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "itemfair",
    version,
    about = "Item-side fairness evaluation and calibration for embedding-grounded recommenders"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// Seed for every random draw
    #[arg(long, global = true, env = "ITEMFAIR_SEED")]
    pub seed: Option<u64>,

    /// Directory all artifacts are read from and written to
    #[arg(long, global = true, env = "ITEMFAIR_OUT_DIR")]
    pub out_dir: Option<PathBuf>,

    /// `popularity`, `genre`, or a path to a custom scheme JSON
    #[arg(long, global = true, env = "ITEMFAIR_SCHEME")]
    pub scheme: Option<String>,

    /// Cutoffs to report, comma separated
    #[arg(long, global = true, value_delimiter = ',', env = "ITEMFAIR_K")]
    pub k: Option<Vec<usize>>,

    /// Reranking exponent
    #[arg(long, global = true, env = "ITEMFAIR_ALPHA")]
    pub alpha: Option<f64>,

    /// Cutoffs aggregated into the reranking punishment, comma separated
    #[arg(long, global = true, value_delimiter = ',', env = "ITEMFAIR_K_SET")]
    pub k_set: Option<Vec<usize>>,

    /// TOML or JSON file with pipeline settings
    #[arg(long, global = true, env = "ITEMFAIR_CONFIG")]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic popularity-biased dataset, embeddings and oracles
    Simulate {
        /// Probability an oracle drifts to a popular item
        #[arg(long)]
        beta: Option<f64>,
        #[arg(long)]
        n_items: Option<usize>,
        #[arg(long)]
        n_users: Option<usize>,
        #[arg(long)]
        n_events: Option<usize>,
    },
    /// Validate and normalize an interaction log, dropping rare genres
    Ingest {
        #[arg(long)]
        interactions: Option<PathBuf>,
        #[arg(long)]
        items: Option<PathBuf>,
        /// Read MovieLens `ratings.dat` / `movies.dat` instead of TSV
        #[arg(long)]
        movielens: bool,
        #[arg(long)]
        min_genre_interactions: Option<u64>,
    },
    /// Split into ten periods, build sequences and draw the training sample
    Split,
    /// Build the group scheme
    Group,
    /// Ground oracle embeddings to their nearest items
    Ground,
    /// Compute fairness and accuracy of a slate file
    Evaluate {
        /// Slates to evaluate (default: slates.jsonl)
        #[arg(long)]
        slates: Option<PathBuf>,
        /// Label used in the report
        #[arg(long, default_value = "grounding")]
        method: String,
        #[arg(long, default_value = "test")]
        split: String,
    },
    /// Compute per-sample training weights from group imbalance
    Reweight,
    /// Build the punishment table from validation slates and rerank
    Rerank,
    /// Evaluate reranking over a range of alphas on the validation split
    Sweep,
    /// Join evaluation outputs into one table plus distribution plots
    Report,
}

/// Parses arguments and runs the selected stage, returning the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_VALIDATION } else { EXIT_OK };
        }
    };
    match execute(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.code
        }
    }
}

pub fn execute(cli: &Cli) -> Result<(), CliError> {
    let settings = config::Settings::resolve(&cli.global)?;
    std::fs::create_dir_all(&settings.out_dir).map_err(|e| CliError::internal("setup", e.to_string()))?;
    match &cli.command {
        Command::Simulate {
            beta,
            n_items,
            n_users,
            n_events,
        } => {
            let mut sim = settings.sim.clone();
            if let Some(b) = beta {
                sim.oracle_bias = *b;
            }
            sim.n_items = n_items.unwrap_or(sim.n_items);
            sim.n_users = n_users.unwrap_or(sim.n_users);
            sim.n_events = n_events.unwrap_or(sim.n_events);
            commands::simulate(&settings, &sim)
        }
        Command::Ingest {
            interactions,
            items,
            movielens,
            min_genre_interactions,
        } => commands::ingest(
            &settings,
            interactions.as_deref(),
            items.as_deref(),
            *movielens,
            min_genre_interactions.unwrap_or(settings.min_genre_interactions),
        ),
        Command::Split => commands::split(&settings),
        Command::Group => commands::group(&settings),
        Command::Ground => commands::ground(&settings),
        Command::Evaluate { slates, method, split } => commands::evaluate(&settings, slates.as_deref(), method, split),
        Command::Reweight => commands::reweight(&settings),
        Command::Rerank => commands::rerank(&settings),
        Command::Sweep => commands::sweep(&settings),
        Command::Report => report::report(&settings),
    }
}
