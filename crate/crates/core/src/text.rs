//! Tokenization and hashed n-gram features shared by the sparse and dense
//! retrievers.

use serde::{Deserialize, Serialize};

pub const FNV_OFFSET_BASIS: u64 = 0xcbf2_9ce4_8422_2325;
pub const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// Default bucket count for [`hash_features`].
pub const DEFAULT_BUCKETS: usize = 1 << 20;

/// 64-bit FNV-1a over raw bytes.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash = FNV_OFFSET_BASIS;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(FNV_PRIME);
    }
    hash
}

/// Incremental FNV-1a, used for fingerprints over structured data.
#[derive(Debug, Clone, Copy)]
pub struct Fnv1a(u64);

impl Default for Fnv1a {
    fn default() -> Self {
        Fnv1a(FNV_OFFSET_BASIS)
    }
}

impl Fnv1a {
    pub fn write(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.0 ^= u64::from(b);
            self.0 = self.0.wrapping_mul(FNV_PRIME);
        }
    }

    pub fn finish(&self) -> u64 {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct TokenizerConfig {
    pub lowercase: bool,
    pub max_tokens: usize,
}

impl Default for TokenizerConfig {
    fn default() -> Self {
        Self {
            lowercase: true,
            max_tokens: 256,
        }
    }
}

/// Splits `text` into maximal runs of Unicode alphanumeric characters.
///
/// Output is in input order and truncated to `cfg.max_tokens`.
pub fn tokenize(text: &str, cfg: &TokenizerConfig) -> Vec<String> {
    let cap = cfg.max_tokens.max(1);
    let mut tokens = Vec::new();
    for run in text.split(|c: char| !c.is_alphanumeric()) {
        if run.is_empty() {
            continue;
        }
        if tokens.len() == cap {
            break;
        }
        tokens.push(if cfg.lowercase { run.to_lowercase() } else { run.to_string() });
    }
    tokens
}

/// Sparse bag of hashed n-grams. `entries` is sorted by bucket with no
/// repeats and every weight strictly positive.
#[derive(Debug, Clone, PartialEq)]
pub struct HashedFeatureVector {
    pub buckets: usize,
    pub entries: Vec<(u32, f64)>,
}

impl HashedFeatureVector {
    pub fn total_weight(&self) -> f64 {
        self.entries.iter().map(|&(_, w)| w).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Hashes every n-gram of the requested orders into `buckets` slots.
///
/// An n-gram is its tokens joined by a single space; its bucket is
/// `fnv1a64(utf8) % buckets`. Repeats accumulate weight.
pub fn hash_features(tokens: &[String], buckets: usize, ngram_orders: &[usize]) -> HashedFeatureVector {
    assert!(buckets >= 2, "hash_features needs at least two buckets");
    let mut raw: Vec<u32> = Vec::new();
    let mut gram = String::new();
    for &n in ngram_orders {
        if n == 0 || n > tokens.len() {
            continue;
        }
        for window in tokens.windows(n) {
            gram.clear();
            for (i, tok) in window.iter().enumerate() {
                if i > 0 {
                    gram.push(' ');
                }
                gram.push_str(tok);
            }
            raw.push((fnv1a64(gram.as_bytes()) % buckets as u64) as u32);
        }
    }
    raw.sort_unstable();

    let mut entries: Vec<(u32, f64)> = Vec::new();
    for b in raw {
        match entries.last_mut() {
            Some((last, w)) if *last == b => *w += 1.0,
            _ => entries.push((b, 1.0)),
        }
    }
    HashedFeatureVector { buckets, entries }
}
