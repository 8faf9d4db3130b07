//! Corpus-composition ablation: evaluate retrieval over unions of sources.

use std::collections::{BTreeMap, HashSet};
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::contexts::{assemble_reader_contexts, export_reader_inputs};
use super::metrics::{evaluate, run_retrieval, Qrel, RetrievalRun};
use super::EvalError;
use crate::corpus::{Corpus, Source};
use crate::dense::{train, DenseIndex, DualEncoder, TrainConfig};
use crate::pairs::{Strategy, TrainingPair};
use crate::retriever::{DenseSearcher, Retriever};
use crate::sparse::{Bm25Params, InvertedIndex};
use crate::text::TokenizerConfig;
use crate::{Error, FORMAT_VERSION};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AblationConfig {
    pub ks: Vec<usize>,
    pub bm25: Bm25Params,
    pub tokenizer: TokenizerConfig,
    pub train: TrainConfig,
    /// Keep ground-truth positives searchable.
    pub include_positives: bool,
    /// Where to write `<subset>.reader.jsonl` files, if anywhere.
    pub contexts_dir: Option<PathBuf>,
    /// Depth of exported reader contexts.
    pub context_k: usize,
}

impl Default for AblationConfig {
    fn default() -> Self {
        Self {
            ks: vec![5, 10],
            bm25: Bm25Params::default(),
            tokenizer: TokenizerConfig::default(),
            train: TrainConfig::default(),
            include_positives: false,
            contexts_dir: None,
            context_k: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub subset: String,
    pub sources: Vec<Source>,
    pub corpus_size: usize,
    pub bm25: BTreeMap<usize, f64>,
    pub dense: Option<BTreeMap<usize, f64>>,
    pub contexts: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub format_version: u32,
    pub rows: Vec<AblationRow>,
}

impl AblationReport {
    pub fn to_table(&self) -> String {
        let ks: Vec<usize> = self.rows.first().map(|r| r.bm25.keys().copied().collect()).unwrap_or_default();
        let mut out = format!("{:<14} {:>10}", "subset", "size");
        for k in &ks {
            out.push_str(&format!(" {:>10} {:>10}", format!("BM25@{k}"), format!("DPR@{k}")));
        }
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!("{:<14} {:>10}", r.subset, r.corpus_size));
            for k in &ks {
                let dense = r.dense.as_ref().map_or("-".to_string(), |d| format!("{:.2}", d[k] * 100.0));
                out.push_str(&format!(" {:>10.2} {:>10}", r.bm25[k] * 100.0, dense));
            }
            out.push('\n');
        }
        out
    }
}

/// The corpus a retriever may search. Ground-truth positives are
/// withheld unless `include_positives`.
pub fn searchable_corpus(corpus: &Corpus, pairs: &[TrainingPair], include_positives: bool) -> Corpus {
    if include_positives {
        return corpus.clone();
    }
    let withheld: HashSet<String> = pairs
        .iter()
        .filter(|p| p.strategy == Strategy::GroundTruth)
        .map(|p| p.positive.clone())
        .collect();
    if withheld.is_empty() {
        corpus.clone()
    } else {
        corpus.without_texts(&withheld)
    }
}

fn subset_label(sources: &[Source]) -> String {
    sources.iter().map(|s| s.as_str()).collect::<Vec<_>>().join("+")
}

/// Trains once on `pairs` (dense columns are skipped when `pairs` is empty),
/// then indexes and evaluates each requested source union.
pub fn run_corpus_ablation(
    corpus: &Corpus,
    subsets: &[Vec<Source>],
    pairs: &[TrainingPair],
    qrels: &[Qrel],
    cfg: &AblationConfig,
) -> Result<AblationReport, Error> {
    if subsets.is_empty() || subsets.iter().any(Vec::is_empty) {
        return Err(EvalError::EmptySubset.into());
    }
    let k_max = *cfg.ks.iter().max().ok_or(EvalError::NoKs)?;
    let model: Option<DualEncoder> = if pairs.is_empty() {
        None
    } else {
        Some(train(pairs, &cfg.train)?.model)
    };
    let searchable = searchable_corpus(corpus, pairs, cfg.include_positives);

    let mut rows = Vec::with_capacity(subsets.len());
    for subset in subsets {
        let mut sources = subset.clone();
        sources.sort();
        sources.dedup();
        let label = subset_label(&sources);
        let part = searchable.filter_sources(&sources);
        log::info!("ablation subset {label}: {} documents", part.len());

        let sparse = InvertedIndex::build(part.documents(), cfg.bm25, &cfg.tokenizer)?;
        let sparse_run = run_retrieval(&sparse, qrels, k_max)?;
        let bm25 = evaluate(&sparse_run, qrels, &cfg.ks, &part)?.hit_at_k;

        let (dense, context_run): (Option<BTreeMap<usize, f64>>, RetrievalRun) = match &model {
            Some(m) => {
                let searcher = DenseSearcher::new(DenseIndex::build(&m.doc, part.documents())?, m.query.clone());
                let run = run_retrieval(&searcher as &dyn Retriever, qrels, k_max.max(cfg.context_k))?;
                (Some(evaluate(&run, qrels, &cfg.ks, &part)?.hit_at_k), run)
            }
            None => (None, sparse_run),
        };

        let mut contexts = Vec::new();
        for q in qrels {
            let ranked = &context_run.results[&q.query_id];
            let depth = ranked.len().min(cfg.context_k);
            contexts.push(assemble_reader_contexts(&q.query_id, &q.query, &ranked[..depth], &part)?);
        }
        if let Some(dir) = &cfg.contexts_dir {
            std::fs::create_dir_all(dir)?;
            export_reader_inputs(&contexts, &dir.join(format!("{label}.reader.jsonl")))?;
        }

        rows.push(AblationRow {
            subset: label,
            sources,
            corpus_size: part.len(),
            bm25,
            dense,
            contexts: contexts.iter().map(|c| c.contexts.len()).sum(),
        });
    }
    Ok(AblationReport {
        format_version: FORMAT_VERSION,
        rows,
    })
}
