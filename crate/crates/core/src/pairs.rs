//! Training-pair construction.
//!
//! Commonsense answers are rarely substrings of any document, so positives
//! come from either a human-written explanation of the answer or the task's
//! reference output.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{normalize_text, NormalizationConfig};

#[derive(Debug, thiserror::Error)]
pub enum PairError {
    #[error("dev fraction must be in [0, 1), got {0}")]
    InvalidFraction(f64),
    #[error("line {line}: {reason}")]
    MalformedRecord { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Strategy {
    Explanation,
    GroundTruth,
}

/// One or several reference texts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum References {
    One(String),
    Many(Vec<String>),
}

impl References {
    pub fn as_slice(&self) -> &[String] {
        match self {
            References::One(s) => std::slice::from_ref(s),
            References::Many(v) => v,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub query: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub explanation: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_truth_output: Option<References>,
    pub dataset: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TrainingPair {
    pub query: String,
    pub positive: String,
    pub strategy: Strategy,
    pub dataset: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PairReport {
    pub pairs: Vec<TrainingPair>,
    pub skipped: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct PairOptions {
    pub normalization: NormalizationConfig,
    /// Emit one ground-truth pair per reference instead of only the first.
    pub all_references: bool,
}

impl Default for PairOptions {
    fn default() -> Self {
        Self {
            normalization: NormalizationConfig::default(),
            all_references: true,
        }
    }
}

fn make_pair(query: &str, positive: &str, strategy: Strategy, dataset: &str, norm: &NormalizationConfig) -> Option<TrainingPair> {
    Some(TrainingPair {
        query: normalize_text(query, norm).ok()?,
        positive: normalize_text(positive, norm).ok()?,
        strategy,
        dataset: dataset.to_string(),
    })
}

/// Explanation as the positive; the answer, when present, is appended to
/// the query after one space.
pub fn pairs_from_explanations(records: &[DatasetRecord], opts: &PairOptions) -> PairReport {
    let mut report = PairReport::default();
    for r in records {
        let query = match r.answer.as_deref().map(str::trim) {
            Some(a) if !a.is_empty() => format!("{} {}", r.query, a),
            _ => r.query.clone(),
        };
        let pair = r
            .explanation
            .as_deref()
            .and_then(|e| make_pair(&query, e, Strategy::Explanation, &r.dataset, &opts.normalization));
        match pair {
            Some(p) => report.pairs.push(p),
            None => report.skipped += 1,
        }
    }
    report
}

/// Reference output as the positive. Records with several references yield
/// one pair each unless `all_references` is off.
pub fn pairs_from_ground_truth(records: &[DatasetRecord], opts: &PairOptions) -> PairReport {
    let mut report = PairReport::default();
    for r in records {
        let refs = r.ground_truth_output.as_ref().map(References::as_slice).unwrap_or(&[]);
        let take = if opts.all_references { refs.len() } else { refs.len().min(1) };
        let before = report.pairs.len();
        for reference in &refs[..take] {
            if let Some(p) = make_pair(&r.query, reference, Strategy::GroundTruth, &r.dataset, &opts.normalization) {
                report.pairs.push(p);
            }
        }
        if report.pairs.len() == before {
            report.skipped += 1;
        }
    }
    report
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MergedPairs {
    pub pairs: Vec<TrainingPair>,
    pub per_dataset: BTreeMap<String, usize>,
}

/// Concatenates the lists and shuffles the union with `seed`.
pub fn merge_datasets(lists: &[Vec<TrainingPair>], seed: u64) -> MergedPairs {
    let mut pairs: Vec<TrainingPair> = lists.iter().flatten().cloned().collect();
    let mut per_dataset = BTreeMap::new();
    for p in &pairs {
        *per_dataset.entry(p.dataset.clone()).or_insert(0) += 1;
    }
    pairs.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    MergedPairs { pairs, per_dataset }
}

/// Seeded split into `(train, dev)` with `|dev| = ⌊|pairs| · dev_fraction⌋`.
pub fn split_pairs(pairs: &[TrainingPair], dev_fraction: f64, seed: u64) -> Result<(Vec<TrainingPair>, Vec<TrainingPair>), PairError> {
    if !(0.0..1.0).contains(&dev_fraction) {
        return Err(PairError::InvalidFraction(dev_fraction));
    }
    let dev_n = (pairs.len() as f64 * dev_fraction).floor() as usize;
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let dev = order[..dev_n].iter().map(|&i| pairs[i].clone()).collect();
    let train = order[dev_n..].iter().map(|&i| pairs[i].clone()).collect();
    Ok((train, dev))
}

pub fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>, PairError> {
    let mut out = Vec::new();
    for (i, line) in BufReader::new(File::open(path)?).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| PairError::MalformedRecord {
            line: i + 1,
            reason: e.to_string(),
        })?);
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<(), PairError> {
    let mut w = BufWriter::new(File::create(path)?);
    for item in items {
        serde_json::to_writer(&mut w, item).map_err(std::io::Error::from)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}
