//! Synthetic retrieval task with a known answer key.
//!
//! Each document states one fact built from a handful of slots, one
//! document per slot combination. Every slot word has a paraphrase used only
//! on the query side, so a paraphrased query shares no token with its
//! positive document. Held-out queries are combinations never seen in
//! training, but each of their words is; a retriever can only answer them by
//! learning the word correspondences from the training pairs.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Document, Source};
use crate::dense::TrainConfig;
use crate::eval::Qrel;
use crate::pairs::DatasetRecord;

/// Words introducing each slot, document side and query side.
const DOC_FRAME: [&str; MAX_SLOTS] = ["the", "can", "the", "near", "with"];
const QUERY_FRAME: [&str; MAX_SLOTS] = ["which", "is able to", "a", "by", "using"];
pub const MAX_SLOTS: usize = 5;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct FixtureConfig {
    /// Number of distinct words per slot; at most five slots.
    pub slots: Vec<usize>,
    pub train_pairs: usize,
    pub heldout_pairs: usize,
    pub seed: u64,
}

impl Default for FixtureConfig {
    /// 5 · 5 · 5 · 4 · 4 = 2,000 documents; 320 training and 80 held-out pairs.
    fn default() -> Self {
        Self {
            slots: vec![5, 5, 5, 4, 4],
            train_pairs: 320,
            heldout_pairs: 80,
            seed: 2022,
        }
    }
}

impl FixtureConfig {
    pub fn documents(&self) -> usize {
        self.slots.iter().product()
    }
}

/// Training settings used with the synthetic task: the default batch size,
/// a higher learning rate and more epochs than the defaults, since 320
/// pairs give only ten steps per epoch.
pub fn synthetic_train_config() -> TrainConfig {
    TrainConfig {
        learning_rate: 5e-3,
        epochs: 80,
        ..TrainConfig::default()
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticTask {
    pub documents: Vec<Document>,
    pub train_records: Vec<DatasetRecord>,
    pub heldout_records: Vec<DatasetRecord>,
    /// Held-out paraphrase queries.
    pub paraphrase_qrels: Vec<Qrel>,
    /// The same held-out targets queried with the document's own words.
    pub keyword_qrels: Vec<Qrel>,
}

const ONSETS: &[&str] = &["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "ch", "sh"];
const VOWELS: &[&str] = &["a", "e", "i", "o", "u"];

/// Unique pseudo-words of three syllables.
fn lexicon(n: usize, rng: &mut ChaCha8Rng) -> Vec<String> {
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let w: String = (0..3)
            .map(|_| {
                format!(
                    "{}{}",
                    ONSETS[rng.gen_range(0..ONSETS.len())],
                    VOWELS[rng.gen_range(0..VOWELS.len())]
                )
            })
            .collect();
        if seen.insert(w.clone()) {
            out.push(w);
        }
    }
    out
}

type Fact = Vec<usize>;

struct Vocabulary {
    doc: Vec<Vec<String>>,
    query: Vec<Vec<String>>,
}

impl Vocabulary {
    fn new(cfg: &FixtureConfig, rng: &mut ChaCha8Rng) -> Self {
        let mut words = lexicon(2 * cfg.slots.iter().sum::<usize>(), rng).into_iter();
        let mut take = |n: &usize| words.by_ref().take(*n).collect::<Vec<_>>();
        let doc = cfg.slots.iter().map(&mut take).collect();
        let query = cfg.slots.iter().map(&mut take).collect();
        Vocabulary { doc, query }
    }

    fn document(&self, f: &Fact) -> String {
        let parts: Vec<String> = f
            .iter()
            .enumerate()
            .map(|(i, &w)| format!("{} {}", DOC_FRAME[i], self.doc[i][w]))
            .collect();
        format!("{}.", parts.join(" "))
    }

    fn paraphrase(&self, f: &Fact) -> String {
        let parts: Vec<String> = f
            .iter()
            .enumerate()
            .map(|(i, &w)| format!("{} {}", QUERY_FRAME[i], self.query[i][w]))
            .collect();
        format!("{}?", parts.join(" "))
    }

    fn keywords(&self, f: &Fact) -> String {
        f.iter()
            .enumerate()
            .map(|(i, &w)| self.doc[i][w].as_str())
            .collect::<Vec<_>>()
            .join(" ")
    }
}

fn doc_id(f: &Fact) -> String {
    let parts: Vec<String> = f.iter().map(|w| format!("{w:02}")).collect();
    format!("fact-{}", parts.join("-"))
}

fn all_facts(slots: &[usize]) -> Vec<Fact> {
    slots.iter().fold(vec![Vec::new()], |acc, &n| {
        acc.iter()
            .flat_map(|prefix| {
                (0..n).map(move |w| {
                    let mut f = prefix.clone();
                    f.push(w);
                    f
                })
            })
            .collect()
    })
}

/// Distinct facts for training and held-out use, redrawn until every slot
/// word of a held-out fact also occurs in some training fact.
fn sample_facts(cfg: &FixtureConfig, mut all: Vec<Fact>, rng: &mut ChaCha8Rng) -> (Vec<Fact>, Vec<Fact>) {
    loop {
        all.shuffle(rng);
        let train = &all[..cfg.train_pairs];
        let heldout = &all[cfg.train_pairs..cfg.train_pairs + cfg.heldout_pairs];
        let seen: HashSet<(usize, usize)> = train.iter().flat_map(|f| f.iter().copied().enumerate()).collect();
        if heldout.iter().all(|f| f.iter().copied().enumerate().all(|sw| seen.contains(&sw))) {
            return (train.to_vec(), heldout.to_vec());
        }
    }
}

pub fn generate(cfg: &FixtureConfig) -> SyntheticTask {
    assert!(
        !cfg.slots.is_empty() && cfg.slots.len() <= MAX_SLOTS && cfg.slots.iter().all(|&n| n > 0),
        "between one and {MAX_SLOTS} non-empty slots"
    );
    assert!(
        cfg.train_pairs + cfg.heldout_pairs <= cfg.documents(),
        "more pairs requested than documents"
    );
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let vocab = Vocabulary::new(cfg, &mut rng);

    let facts = all_facts(&cfg.slots);
    let sources = [Source::Haf, Source::Cbd, Source::Crc];
    let mut documents: Vec<Document> = facts
        .iter()
        .enumerate()
        .map(|(i, f)| Document::new(doc_id(f), vocab.document(f), sources[i % 3], "synthetic"))
        .collect();
    documents.shuffle(&mut rng);

    let (train, heldout) = sample_facts(cfg, facts, &mut rng);
    let record = |f: &Fact| DatasetRecord {
        query: vocab.paraphrase(f),
        answer: None,
        explanation: Some(vocab.document(f)),
        ground_truth_output: None,
        dataset: "synthetic".to_string(),
    };
    let qrel = |i: usize, f: &Fact, query: String| Qrel {
        query_id: format!("q{i:04}"),
        query,
        gold_doc: Some(vocab.document(f)),
        gold_doc_id: Some(doc_id(f)),
    };

    SyntheticTask {
        documents,
        train_records: train.iter().map(record).collect(),
        heldout_records: heldout.iter().map(record).collect(),
        paraphrase_qrels: heldout.iter().enumerate().map(|(i, f)| qrel(i, f, vocab.paraphrase(f))).collect(),
        keyword_qrels: heldout.iter().enumerate().map(|(i, f)| qrel(i, f, vocab.keywords(f))).collect(),
    }
}
