//! Okapi BM25 over an inverted index.
//!
//! Scoring uses the non-negative IDF `ln(1 + (N - df + 0.5) / (df + 0.5))`
//! and the usual saturation `tf·(k1+1) / (tf + k1·(1 - b + b·dl/avgdl))`.
//! Repeated query terms are scored once. No stemming or stopword removal.
//!
//! # Serialized layout (`RSPX`, version 1, all integers little-endian)
//!
//! ```text
//! magic "RSPX" | u32 version | u64 config hash
//! f64 k1 | f64 b | u32 lowercase | u32 max_tokens
//! u64 N | N × (u32 len, utf8 id) | N × u32 doc length
//! u64 T | T × term, sorted by bytes:
//!     u32 len, utf8 term | u32 df | df × (u32 ordinal delta, u32 tf)
//! u64 FNV-1a of every preceding byte
//! ```
//!
//! Ordinal deltas are taken against the previous posting of the same term
//! (the first against zero).

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::binio::{ByteReader, ByteWriter, FormatError};
use crate::corpus::Document;
use crate::rank::{id_ranks, ScoredDoc, TopK};
use crate::text::{tokenize, Fnv1a, TokenizerConfig};

pub const SPARSE_MAGIC: &[u8; 4] = b"RSPX";
pub const SPARSE_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum SparseError {
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("ordinal {ordinal} out of range for {len} documents")]
    OrdinalOutOfRange { ordinal: usize, len: usize },
    #[error("query has no tokens")]
    EmptyQuery,
    #[error("k must be at least 1")]
    InvalidK,
    #[error("invalid BM25 parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Self { k1: 1.2, b: 0.75 }
    }
}

impl Bm25Params {
    pub fn validate(&self) -> Result<(), SparseError> {
        if !(self.k1 >= 0.0 && self.k1.is_finite()) {
            return Err(SparseError::InvalidParams(format!("k1 = {}", self.k1)));
        }
        if !(0.0..=1.0).contains(&self.b) {
            return Err(SparseError::InvalidParams(format!("b = {}", self.b)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Posting {
    pub ordinal: u32,
    pub tf: u32,
}

#[derive(Debug, Clone)]
pub struct InvertedIndex {
    params: Bm25Params,
    tokenizer: TokenizerConfig,
    ids: Vec<String>,
    tie_ranks: Vec<u32>,
    doc_lengths: Vec<u32>,
    avgdl: f64,
    postings: HashMap<String, Vec<Posting>>,
}

pub fn idf(n_docs: usize, df: usize) -> f64 {
    let n = n_docs as f64;
    let df = df as f64;
    (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
}

#[inline]
fn term_weight(params: &Bm25Params, idf: f64, tf: u32, dl: u32, avgdl: f64) -> f64 {
    let tf = f64::from(tf);
    let norm = params.k1 * (1.0 - params.b + params.b * f64::from(dl) / avgdl);
    idf * tf * (params.k1 + 1.0) / (tf + norm)
}

fn unique_terms(tokens: &[String]) -> Vec<&str> {
    let mut seen = Vec::new();
    for t in tokens {
        if !seen.contains(&t.as_str()) {
            seen.push(t.as_str());
        }
    }
    seen
}

impl InvertedIndex {
    pub fn build(docs: &[Document], params: Bm25Params, tokenizer: &TokenizerConfig) -> Result<Self, SparseError> {
        params.validate()?;
        if docs.is_empty() {
            return Err(SparseError::EmptyCorpus);
        }
        let mut postings: HashMap<String, Vec<Posting>> = HashMap::new();
        let mut doc_lengths = Vec::with_capacity(docs.len());
        let mut tf: HashMap<String, u32> = HashMap::new();
        for (ordinal, doc) in docs.iter().enumerate() {
            let tokens = tokenize(&doc.text, tokenizer);
            doc_lengths.push(tokens.len() as u32);
            tf.clear();
            for t in tokens {
                *tf.entry(t).or_insert(0) += 1;
            }
            for (term, count) in tf.drain() {
                postings.entry(term).or_default().push(Posting {
                    ordinal: ordinal as u32,
                    tf: count,
                });
            }
        }
        let ids: Vec<String> = docs.iter().map(|d| d.id.clone()).collect();
        Ok(Self::assemble(params, tokenizer.clone(), ids, doc_lengths, postings))
    }

    fn assemble(
        params: Bm25Params,
        tokenizer: TokenizerConfig,
        ids: Vec<String>,
        doc_lengths: Vec<u32>,
        postings: HashMap<String, Vec<Posting>>,
    ) -> Self {
        let total: u64 = doc_lengths.iter().map(|&l| u64::from(l)).sum();
        let avgdl = total as f64 / doc_lengths.len() as f64;
        InvertedIndex {
            params,
            tokenizer,
            tie_ranks: id_ranks(&ids),
            ids,
            doc_lengths,
            avgdl,
            postings,
        }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn avgdl(&self) -> f64 {
        self.avgdl
    }

    pub fn params(&self) -> Bm25Params {
        self.params
    }

    pub fn tokenizer(&self) -> &TokenizerConfig {
        &self.tokenizer
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn doc_lengths(&self) -> &[u32] {
        &self.doc_lengths
    }

    pub fn postings(&self, term: &str) -> Option<&[Posting]> {
        self.postings.get(term).map(Vec::as_slice)
    }

    pub fn term_count(&self) -> usize {
        self.postings.len()
    }

    pub fn doc_freq(&self, term: &str) -> usize {
        self.postings.get(term).map_or(0, Vec::len)
    }

    pub fn config_hash(&self) -> u64 {
        let mut h = Fnv1a::default();
        h.write(SPARSE_MAGIC);
        h.write(&self.params.k1.to_le_bytes());
        h.write(&self.params.b.to_le_bytes());
        h.write(&[self.tokenizer.lowercase as u8]);
        h.write(&(self.tokenizer.max_tokens as u64).to_le_bytes());
        h.finish()
    }

    /// BM25 of one document against already-tokenized query terms.
    pub fn bm25_score(&self, query_tokens: &[String], ordinal: usize) -> Result<f64, SparseError> {
        if ordinal >= self.len() {
            return Err(SparseError::OrdinalOutOfRange { ordinal, len: self.len() });
        }
        let dl = self.doc_lengths[ordinal];
        let mut score = 0.0;
        for term in unique_terms(query_tokens) {
            let Some(list) = self.postings.get(term) else {
                continue;
            };
            if let Ok(pos) = list.binary_search_by_key(&(ordinal as u32), |p| p.ordinal) {
                let w = idf(self.len(), list.len());
                score += term_weight(&self.params, w, list[pos].tf, dl, self.avgdl);
            }
        }
        Ok(score)
    }

    /// Top-`k` documents with a positive score, best first, ties by ascending id.
    pub fn search(&self, query: &str, k: usize) -> Result<Vec<ScoredDoc>, SparseError> {
        if k == 0 {
            return Err(SparseError::InvalidK);
        }
        let tokens = tokenize(query, &self.tokenizer);
        if tokens.is_empty() {
            return Err(SparseError::EmptyQuery);
        }
        // Term-at-a-time in query order, so each document's sum follows the
        // same order as `bm25_score`.
        let mut acc: HashMap<u32, f64> = HashMap::new();
        for term in unique_terms(&tokens) {
            let Some(list) = self.postings.get(term) else {
                continue;
            };
            let w = idf(self.len(), list.len());
            for p in list {
                let dl = self.doc_lengths[p.ordinal as usize];
                *acc.entry(p.ordinal).or_insert(0.0) += term_weight(&self.params, w, p.tf, dl, self.avgdl);
            }
        }
        let mut top = TopK::new(k);
        for (&ordinal, &score) in &acc {
            if score > 0.0 {
                top.push(ordinal, score, self.tie_ranks[ordinal as usize]);
            }
        }
        Ok(top
            .into_sorted()
            .into_iter()
            .map(|(ord, score)| ScoredDoc {
                id: self.ids[ord as usize].clone(),
                score,
            })
            .collect())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = ByteWriter::with_header(SPARSE_MAGIC, SPARSE_VERSION);
        w.u64(self.config_hash());
        w.f64(self.params.k1);
        w.f64(self.params.b);
        w.u32(self.tokenizer.lowercase as u32);
        w.u32(self.tokenizer.max_tokens as u32);
        w.u64(self.ids.len() as u64);
        for id in &self.ids {
            w.str(id);
        }
        for &l in &self.doc_lengths {
            w.u32(l);
        }
        let mut terms: Vec<&String> = self.postings.keys().collect();
        terms.sort();
        w.u64(terms.len() as u64);
        for term in terms {
            let list = &self.postings[term];
            w.str(term);
            w.u32(list.len() as u32);
            let mut prev = 0u32;
            for p in list {
                w.u32(p.ordinal - prev);
                w.u32(p.tf);
                prev = p.ordinal;
            }
        }
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, SparseError> {
        let mut r = ByteReader::open(bytes, SPARSE_MAGIC, SPARSE_VERSION)?;
        let stored_hash = r.u64()?;
        let params = Bm25Params { k1: r.f64()?, b: r.f64()? };
        params.validate()?;
        let tokenizer = TokenizerConfig {
            lowercase: r.u32()? != 0,
            max_tokens: r.u32()? as usize,
        };
        let n = r.count(8)?;
        if n == 0 {
            return Err(FormatError::Invalid("index has no documents".into()).into());
        }
        let ids = (0..n).map(|_| r.str()).collect::<Result<Vec<_>, _>>()?;
        let doc_lengths = (0..n).map(|_| r.u32()).collect::<Result<Vec<_>, _>>()?;
        let t = r.count(8)?;
        let mut postings = HashMap::with_capacity(t);
        for _ in 0..t {
            let term = r.str()?;
            let df = r.u32()? as usize;
            let mut list = Vec::with_capacity(df.min(n));
            let mut prev = 0u32;
            for i in 0..df {
                let delta = r.u32()?;
                if i > 0 && delta == 0 {
                    return Err(FormatError::Invalid(format!("postings of {term:?} not strictly increasing")).into());
                }
                let ordinal = prev
                    .checked_add(delta)
                    .filter(|&o| (o as usize) < n)
                    .ok_or_else(|| FormatError::Invalid(format!("posting ordinal out of range in {term:?}")))?;
                list.push(Posting { ordinal, tf: r.u32()? });
                prev = ordinal;
            }
            postings.insert(term, list);
        }
        r.expect_end()?;
        let index = Self::assemble(params, tokenizer, ids, doc_lengths, postings);
        if index.config_hash() != stored_hash {
            return Err(FormatError::Invalid("config hash does not match header fields".into()).into());
        }
        Ok(index)
    }

    pub fn save(&self, path: &Path) -> Result<(), SparseError> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, SparseError> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}
