mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use entcl::encoder::PoolingStrategy;

#[derive(Parser, Debug)]
#[command(name = "entcl", version, about = "Entity-anchored contrastive sentence embeddings")]
pub struct Cli {
    /// Seed for every random choice made by the command.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Artifact directory for this invocation.
    #[arg(long, global = true, env = "ENTCL_OUT", default_value = "entcl-out")]
    pub out: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct ConfigArgs {
    /// TOML configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override a configuration key, e.g. `--set lambda=0.2`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Args, Debug, Clone)]
pub struct DataArgs {
    /// Directory written by `synth` or `preprocess`; supplies defaults for
    /// the file flags below.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Split file (`split.jsonl`).
    #[arg(long)]
    pub split: Option<PathBuf>,
    /// Definition dictionary (`dictionary.jsonl`).
    #[arg(long)]
    pub dictionary: Option<PathBuf>,
    /// Pairs used for best-step selection (`sts_train.tsv`).
    #[arg(long)]
    pub train_pairs: Option<PathBuf>,
    /// Held-out pairs (`sts_test.tsv`).
    #[arg(long)]
    pub test_pairs: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate the synthetic corpus, dictionary and similarity pairs.
    Synth(ConfigArgs),
    /// Segment, filter and annotate raw documents into entity/none sets.
    Preprocess {
        /// Plain-text documents separated by blank lines.
        #[arg(long)]
        documents: PathBuf,
        /// Definition dictionary (JSONL records with id, name, surfaces, definition).
        #[arg(long)]
        dictionary: PathBuf,
        /// Sentences with fewer whitespace-delimited words are dropped.
        #[arg(long, default_value_t = entcl::experiments::MIN_WORDS)]
        min_words: usize,
    },
    /// Entity statistics of a preprocessed split.
    Stats {
        /// Split file written by `synth` or `preprocess`.
        #[arg(long)]
        split: PathBuf,
    },
    /// Train one run with `--seed`.
    Train {
        #[command(flatten)]
        config: ConfigArgs,
        #[command(flatten)]
        data: DataArgs,
    },
    /// Score similarity pairs with a checkpoint.
    Eval {
        /// Checkpoint written by `train` (`best.ckpt` or `last.ckpt`).
        #[arg(long)]
        checkpoint: PathBuf,
        /// Similarity pairs, `sentence1<TAB>sentence2<TAB>gold`.
        #[arg(long)]
        pairs: PathBuf,
        /// cls, last_avg or first_last_avg.
        #[arg(long, default_value = "first_last_avg")]
        pooling: PoolingStrategy,
        /// Whiten embeddings (fitted on the pair sentences) before scoring.
        #[arg(long)]
        whiten: bool,
        /// Write the diagnostics report as JSON.
        #[arg(long)]
        report: Option<PathBuf>,
        /// Write an alignment/uniformity scatter plot (SVG).
        #[arg(long)]
        plot: Option<PathBuf>,
    },
    /// Monte-Carlo duplicate-entity rate of random batches.
    SimulateDuplicates {
        /// Uniform distribution over this many entities.
        #[arg(long, conflicts_with = "distribution", required_unless_present = "distribution")]
        uniform: Option<usize>,
        /// `id<TAB>count` entity frequency file (as written by `stats`).
        #[arg(long)]
        distribution: Option<PathBuf>,
        /// Entities drawn per simulated batch.
        #[arg(long, default_value_t = 32)]
        batch_size: usize,
        /// Number of simulated batches.
        #[arg(long, default_value_t = 100_000)]
        trials: usize,
    },
    /// Run an ablation grid.
    Grid {
        /// Built-in recipe: lambda, ratio, strategy, variant or perturbation.
        #[arg(long, conflicts_with = "grid", required_unless_present = "grid")]
        recipe: Option<String>,
        /// Grid definition file (TOML with `name`, `axis` and `base`).
        #[arg(long)]
        grid: Option<PathBuf>,
        /// Overrides applied to the grid's base configuration.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        /// Cells trained concurrently.
        #[arg(long, default_value_t = 1)]
        workers: usize,
        #[command(flatten)]
        data: DataArgs,
    },
    /// Render grid results as a text table and CSV.
    Report {
        /// `grid.json` written by `grid`.
        #[arg(long)]
        grid: PathBuf,
        /// Also write the table as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match commands::dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let (code, line) = commands::describe_error(&e);
            eprintln!("{line}");
            ExitCode::from(code)
        }
    }
}
