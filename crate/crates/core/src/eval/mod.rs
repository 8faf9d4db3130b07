//! Retrieval evaluation and reader hand-off.

mod ablation;
mod contexts;
mod metrics;
mod reader;

pub use ablation::{run_corpus_ablation, searchable_corpus, AblationConfig, AblationReport, AblationRow};
pub use contexts::{assemble_reader_contexts, export_reader_inputs, read_reader_inputs, ReaderContext};
pub use metrics::{
    evaluate, hit_at_k, k_sweep_from_run, run_k_sweep, run_retrieval, EvalReport, Qrel, RetrievalRun, SweepReport, SweepRow,
};
pub use reader::{call_external_reader, ReaderClientConfig, ReaderError, ReaderOutput};

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("no qrel for query {0:?}")]
    MissingQrel(String),
    #[error("k = {k} exceeds the run's k_max = {k_max}")]
    KTooLarge { k: usize, k_max: usize },
    #[error("k must be at least 1")]
    InvalidK,
    #[error("run has no queries")]
    EmptyRun,
    #[error("qrel {0:?} has neither gold_doc nor gold_doc_id")]
    InvalidQrel(String),
    #[error("empty source subset requested")]
    EmptySubset,
    #[error("no k values requested")]
    NoKs,
}
