use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::corpus::{normalize_text, Corpus, NormalizationConfig};
use crate::rank::ScoredDoc;
use crate::retriever::Retriever;
use crate::{Error, FORMAT_VERSION};

/// A query and its annotated gold document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Qrel {
    pub query_id: String,
    pub query: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_doc: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_doc_id: Option<String>,
}

impl Qrel {
    pub fn validate(&self) -> Result<(), EvalError> {
        if self.gold_doc.is_none() && self.gold_doc_id.is_none() {
            return Err(EvalError::InvalidQrel(self.query_id.clone()));
        }
        Ok(())
    }
}

/// Ranked lists per query id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalRun {
    pub format_version: u32,
    pub retriever: String,
    pub k_max: usize,
    pub results: BTreeMap<String, Vec<ScoredDoc>>,
}

impl RetrievalRun {
    pub fn new(retriever: impl Into<String>, k_max: usize) -> Self {
        RetrievalRun {
            format_version: FORMAT_VERSION,
            retriever: retriever.into(),
            k_max,
            results: BTreeMap::new(),
        }
    }
}

/// Retrieves `k_max` documents for every qrel's query.
pub fn run_retrieval(retriever: &dyn Retriever, qrels: &[Qrel], k_max: usize) -> Result<RetrievalRun, Error> {
    if k_max == 0 {
        return Err(EvalError::InvalidK.into());
    }
    let mut run = RetrievalRun::new(retriever.label(), k_max);
    for q in qrels {
        run.results.insert(q.query_id.clone(), retriever.search(&q.query, k_max)?);
    }
    Ok(run)
}

/// Decides whether a retrieved document is the gold one: by id when the qrel
/// names one, otherwise by normalized text.
struct GoldMatcher<'a> {
    corpus: &'a Corpus,
    gold: HashMap<&'a str, (Option<&'a str>, Option<String>)>,
}

impl<'a> GoldMatcher<'a> {
    fn new(qrels: &'a [Qrel], corpus: &'a Corpus) -> Result<Self, EvalError> {
        let norm = NormalizationConfig::default();
        let mut gold = HashMap::new();
        for q in qrels {
            q.validate()?;
            let text = q.gold_doc.as_deref().and_then(|t| normalize_text(t, &norm).ok());
            gold.insert(q.query_id.as_str(), (q.gold_doc_id.as_deref(), text));
        }
        Ok(GoldMatcher { corpus, gold })
    }

    fn first_hit_rank(&self, query_id: &str, ranked: &[ScoredDoc]) -> Result<Option<usize>, Error> {
        let (gold_id, gold_text) = self
            .gold
            .get(query_id)
            .ok_or_else(|| EvalError::MissingQrel(query_id.to_string()))?;
        for (rank, hit) in ranked.iter().enumerate() {
            let matched = match (gold_id, gold_text) {
                (Some(id), _) => hit.id == *id,
                (None, Some(text)) => self.corpus.get_document(&hit.id)?.text == *text,
                (None, None) => false,
            };
            if matched {
                return Ok(Some(rank));
            }
        }
        Ok(None)
    }
}

fn check_k(run: &RetrievalRun, k: usize) -> Result<(), EvalError> {
    if k == 0 {
        return Err(EvalError::InvalidK);
    }
    if k > run.k_max {
        return Err(EvalError::KTooLarge { k, k_max: run.k_max });
    }
    Ok(())
}

/// Rank (0-based) of the first gold document per query, in query-id order.
fn gold_ranks(run: &RetrievalRun, qrels: &[Qrel], corpus: &Corpus) -> Result<Vec<Option<usize>>, Error> {
    if run.results.is_empty() {
        return Err(EvalError::EmptyRun.into());
    }
    let matcher = GoldMatcher::new(qrels, corpus)?;
    run.results
        .iter()
        .map(|(qid, ranked)| matcher.first_hit_rank(qid, ranked))
        .collect()
}

fn hit_rate(ranks: &[Option<usize>], k: usize) -> f64 {
    let hits = ranks.iter().filter(|r| matches!(r, Some(rank) if *rank < k)).count();
    hits as f64 / ranks.len() as f64
}

/// Fraction of the run's queries whose top-`k` contains the gold document.
pub fn hit_at_k(run: &RetrievalRun, qrels: &[Qrel], k: usize, corpus: &Corpus) -> Result<f64, Error> {
    check_k(run, k)?;
    Ok(hit_rate(&gold_ranks(run, qrels, corpus)?, k))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub format_version: u32,
    pub retriever: String,
    pub queries: usize,
    pub hit_at_k: BTreeMap<usize, f64>,
}

impl EvalReport {
    pub fn to_table(&self) -> String {
        let mut out = format!("retriever: {}  queries: {}\n", self.retriever, self.queries);
        for (k, v) in &self.hit_at_k {
            out.push_str(&format!("Hit@{k:<4} {:>7.2}\n", v * 100.0));
        }
        out
    }
}

pub fn evaluate(run: &RetrievalRun, qrels: &[Qrel], ks: &[usize], corpus: &Corpus) -> Result<EvalReport, Error> {
    if ks.is_empty() {
        return Err(EvalError::NoKs.into());
    }
    for &k in ks {
        check_k(run, k)?;
    }
    let ranks = gold_ranks(run, qrels, corpus)?;
    Ok(EvalReport {
        format_version: FORMAT_VERSION,
        retriever: run.retriever.clone(),
        queries: ranks.len(),
        hit_at_k: ks.iter().map(|&k| (k, hit_rate(&ranks, k))).collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub k: usize,
    pub hit_at_k: f64,
    /// Reader contexts the run yields at this depth, summed over queries.
    pub contexts: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub format_version: u32,
    pub retriever: String,
    pub rows: Vec<SweepRow>,
}

impl SweepReport {
    pub fn to_table(&self) -> String {
        let mut out = format!("retriever: {}\n{:>5} {:>8} {:>9}\n", self.retriever, "k", "Hit@k", "contexts");
        for r in &self.rows {
            out.push_str(&format!("{:>5} {:>8.2} {:>9}\n", r.k, r.hit_at_k * 100.0, r.contexts));
        }
        out
    }
}

/// Hit@k for each `k` from one run, truncated per `k`.
pub fn k_sweep_from_run(run: &RetrievalRun, qrels: &[Qrel], ks: &[usize], corpus: &Corpus) -> Result<SweepReport, Error> {
    if ks.is_empty() {
        return Err(EvalError::NoKs.into());
    }
    for &k in ks {
        check_k(run, k)?;
    }
    let ranks = gold_ranks(run, qrels, corpus)?;
    let rows = ks
        .iter()
        .map(|&k| SweepRow {
            k,
            hit_at_k: hit_rate(&ranks, k),
            contexts: run.results.values().map(|r| r.len().min(k)).sum(),
        })
        .collect();
    Ok(SweepReport {
        format_version: FORMAT_VERSION,
        retriever: run.retriever.clone(),
        rows,
    })
}

/// Retrieves once at `max(ks)` and evaluates every `k`.
pub fn run_k_sweep(retriever: &dyn Retriever, qrels: &[Qrel], ks: &[usize], corpus: &Corpus) -> Result<SweepReport, Error> {
    let k_max = *ks.iter().max().ok_or(EvalError::NoKs)?;
    let run = run_retrieval(retriever, qrels, k_max)?;
    k_sweep_from_run(&run, qrels, ks, corpus)
}
