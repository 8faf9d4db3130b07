//! Command-line front-end and HTTP search service for the retrieval pipeline.

pub mod commands;
pub mod config;
pub mod engine;
pub mod server;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use config::{Paths, PipelineConfig};
pub use engine::{Engine, RetrieverKind, SearchHit, SearchResponse};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("missing artifact: {}", .0.display())]
    MissingArtifact(PathBuf),
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] csret_core::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl CliError {
    /// Stable error name for the one-line error report.
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "ConfigError",
            CliError::MissingArtifact(_) => "MissingArtifact",
            CliError::Usage(_) => "UsageError",
            CliError::Core(e) => e.kind(),
            CliError::Io(_) => "Io",
            CliError::Json(_) => "Json",
        }
    }

    /// `error kind=<Kind> message=<JSON string>` on a single line.
    pub fn report_line(&self) -> String {
        format!("error kind={} message={}", self.kind(), serde_json::Value::String(self.to_string()))
    }
}

macro_rules! via_core {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Core(e.into())
            }
        }
    )*};
}
via_core!(
    csret_core::CorpusError,
    csret_core::SparseError,
    csret_core::DenseError,
    csret_core::PairError,
    csret_core::EvalError,
    csret_core::ReaderError
);

#[derive(Debug, Parser)]
#[command(name = "csret", version, about = "Sparse and dense retrieval over commonsense corpora")]
pub struct Cli {
    /// JSON pipeline configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Normalize and add JSONL statement files to the corpus store.
    Ingest(IngestArgs),
    /// Print per-source corpus statistics.
    Stats(StatsArgs),
    /// Build the BM25 index over the corpus.
    BuildSparse,
    /// Encode the corpus with the document encoder into a dense index.
    BuildDense,
    /// Turn dataset records into (query, positive) training pairs.
    MakePairs(MakePairsArgs),
    /// Train the query and document encoders on the pairs file.
    Train(TrainArgs),
    /// Retrieve for one query, or for every query of a qrels file.
    Search(SearchArgs),
    /// Hit@k of a stored retrieval run against the qrels.
    Eval(EvalArgs),
    /// Hit@k per corpus source subset.
    Ablate(AblateArgs),
    /// Hit@k over a range of retrieval depths.
    SweepK(SweepArgs),
    /// Write reader inputs (query plus retrieved contexts) for a run.
    Contexts(ContextsArgs),
    /// Send reader inputs to an external reader endpoint.
    Read(ReadArgs),
    /// Serve GET /search over the built indexes.
    Serve(ServeArgs),
    /// Write the synthetic evaluation task and a matching config.
    Fixture(FixtureArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// `SOURCE=PATH`, SOURCE one of HAF, CBD, CRC, CUSTOM. Repeatable.
    #[arg(long = "input", required = true)]
    pub inputs: Vec<String>,
    /// Add to the existing corpus store instead of replacing it.
    #[arg(long)]
    pub append: bool,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum StrategyArg {
    Explanation,
    GroundTruth,
}

#[derive(Debug, Args)]
pub struct MakePairsArgs {
    /// Dataset record JSONL files. Repeatable.
    #[arg(long = "input", required = true)]
    pub inputs: Vec<PathBuf>,
    #[arg(long, value_enum)]
    pub strategy: StrategyArg,
    /// Write a seeded dev split of this fraction next to the pairs file.
    #[arg(long)]
    pub dev_fraction: Option<f64>,
    /// Use only the first reference when a record has several.
    #[arg(long)]
    pub first_reference_only: bool,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SearchArgs {
    #[arg(long, value_enum, default_value = "sparse")]
    pub retriever: RetrieverKind,
    /// A single query; prints the ranked documents as JSON.
    #[arg(long, conflicts_with = "queries", required_unless_present = "queries")]
    pub q: Option<String>,
    /// Qrels JSONL; writes a retrieval run.
    #[arg(long)]
    pub queries: Option<PathBuf>,
    #[arg(long)]
    pub k: Option<usize>,
    /// Where to write the run (batch mode); stdout otherwise.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub run: PathBuf,
    /// Comma-separated cutoffs; defaults to the configured k.
    #[arg(long, value_delimiter = ',')]
    pub k: Vec<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    /// Comma-separated sources forming one subset, e.g. `HAF,CBD`. Repeatable;
    /// defaults to HAF, HAF+CBD and HAF+CBD+CRC.
    #[arg(long = "subset")]
    pub subsets: Vec<String>,
    #[arg(long, value_delimiter = ',', default_values_t = [5, 10])]
    pub k: Vec<usize>,
    /// Skip training and report BM25 only.
    #[arg(long)]
    pub sparse_only: bool,
    /// Keep ground-truth positives in the searchable corpus.
    #[arg(long)]
    pub include_positives: bool,
    /// Also write reader inputs per subset into this directory.
    #[arg(long)]
    pub contexts_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long, value_enum, default_value = "sparse")]
    pub retriever: RetrieverKind,
    #[arg(long, value_delimiter = ',', default_values_t = [1, 3, 5, 10, 20])]
    pub ks: Vec<usize>,
}

#[derive(Debug, Args)]
pub struct ContextsArgs {
    #[arg(long)]
    pub run: PathBuf,
    /// Contexts per query; defaults to the configured k.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReadArgs {
    #[arg(long)]
    pub inputs: PathBuf,
    /// Defaults to `reader_endpoint` from the config.
    #[arg(long)]
    pub endpoint: Option<String>,
    #[arg(long, default_value_t = 30_000)]
    pub timeout_ms: u64,
    #[arg(long, default_value_t = 2)]
    pub retries: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub addr: std::net::SocketAddr,
    /// Retrievers to load. Repeatable; defaults to sparse.
    #[arg(long = "retriever", value_enum)]
    pub retrievers: Vec<RetrieverKind>,
}

#[derive(Debug, Args)]
pub struct FixtureArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 2022)]
    pub seed: u64,
}

/// Runs one command and returns what belongs on standard output.
pub fn run(cli: Cli) -> Result<String, CliError> {
    if let Command::Fixture(args) = &cli.command {
        return commands::fixture(args);
    }
    let cfg = PipelineConfig::load(cli.config.as_deref())?;
    log::info!("config_hash={:016x} seed={}", cfg.config_hash(), cfg.train.seed);
    match cli.command {
        Command::Ingest(a) => commands::ingest(&cfg, &a),
        Command::Stats(a) => commands::stats(&cfg, &a),
        Command::BuildSparse => commands::build_sparse(&cfg),
        Command::BuildDense => commands::build_dense(&cfg),
        Command::MakePairs(a) => commands::make_pairs(&cfg, &a),
        Command::Train(a) => commands::train(&cfg, &a),
        Command::Search(a) => commands::search(&cfg, &a),
        Command::Eval(a) => commands::eval(&cfg, &a),
        Command::Ablate(a) => commands::ablate(&cfg, &a),
        Command::SweepK(a) => commands::sweep_k(&cfg, &a),
        Command::Contexts(a) => commands::contexts(&cfg, &a),
        Command::Read(a) => commands::read(&cfg, &a),
        Command::Serve(a) => commands::serve(&cfg, &a),
        Command::Fixture(_) => unreachable!("handled above"),
    }
}
