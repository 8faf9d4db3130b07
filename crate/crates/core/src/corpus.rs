//! Multi-source document store: ingestion, normalization, exact-text
//! deduplication, persistence and per-source statistics.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

use crate::text::Fnv1a;
use crate::FORMAT_VERSION;

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("text is empty after normalization")]
    EmptyAfterNormalization,
    #[error("file not found: {0}")]
    FileNotFound(PathBuf),
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("document not found: {0}")]
    NotFound(String),
    #[error("duplicate document id: {0}")]
    DuplicateId(String),
    #[error("unknown source {0:?}")]
    UnknownSource(String),
    #[error("corrupt corpus file {path} line {line}: {reason}")]
    Corrupt { path: PathBuf, line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Provenance of a document.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Source {
    /// Human annotated facts.
    Haf,
    /// Commonsense benchmark datasets.
    Cbd,
    /// Commonsense relevant web corpus.
    Crc,
    Custom,
}

impl Source {
    pub const ALL: [Source; 4] = [Source::Haf, Source::Cbd, Source::Crc, Source::Custom];

    pub fn as_str(self) -> &'static str {
        match self {
            Source::Haf => "HAF",
            Source::Cbd => "CBD",
            Source::Crc => "CRC",
            Source::Custom => "CUSTOM",
        }
    }
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Source {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "HAF" => Ok(Source::Haf),
            "CBD" => Ok(Source::Cbd),
            "CRC" => Ok(Source::Crc),
            "CUSTOM" => Ok(Source::Custom),
            _ => Err(CorpusError::UnknownSource(s.to_string())),
        }
    }
}

/// One retrievable statement. Field order is the persisted key order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub text: String,
    pub source: Source,
    pub origin: String,
    pub token_count: usize,
}

impl Document {
    /// Builds a document from already-normalized text.
    pub fn new(id: impl Into<String>, text: impl Into<String>, source: Source, origin: impl Into<String>) -> Self {
        let text = text.into();
        let token_count = text.split_whitespace().count();
        Self {
            id: id.into(),
            text,
            source,
            origin: origin.into(),
            token_count,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(default)]
pub struct NormalizationConfig {
    pub lowercase: bool,
    pub collapse_whitespace: bool,
    pub unicode_nfc: bool,
    pub strip_control_chars: bool,
}

impl Default for NormalizationConfig {
    fn default() -> Self {
        Self {
            lowercase: true,
            collapse_whitespace: true,
            unicode_nfc: true,
            strip_control_chars: true,
        }
    }
}

impl NormalizationConfig {
    pub fn fingerprint(&self) -> u64 {
        let mut h = Fnv1a::default();
        h.write(&[
            self.lowercase as u8,
            self.collapse_whitespace as u8,
            self.unicode_nfc as u8,
            self.strip_control_chars as u8,
        ]);
        h.finish()
    }
}

/// Normalizes a raw statement. Punctuation is kept.
pub fn normalize_text(raw: &str, cfg: &NormalizationConfig) -> Result<String, CorpusError> {
    let mut s = raw.to_string();
    if cfg.strip_control_chars {
        s.retain(|c| !c.is_control() || c.is_whitespace());
    }
    if cfg.lowercase {
        s = s.to_lowercase();
    }
    if cfg.unicode_nfc {
        s = s.nfc().collect();
    }
    let out = if cfg.collapse_whitespace {
        s.split_whitespace().collect::<Vec<_>>().join(" ")
    } else {
        s.trim().to_string()
    };
    if out.is_empty() {
        return Err(CorpusError::EmptyAfterNormalization);
    }
    Ok(out)
}

#[derive(Debug, Deserialize)]
struct InputRecord {
    id: Option<String>,
    text: String,
    origin: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordError {
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestReport {
    pub accepted: usize,
    pub rejected: usize,
    pub deduped: usize,
    pub errors: Vec<RecordError>,
}

impl IngestReport {
    pub fn total(&self) -> usize {
        self.accepted + self.rejected + self.deduped
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SourceStats {
    pub instance_count: usize,
    pub mean_words: f64,
    pub stdev_words: f64,
}

impl SourceStats {
    fn from_counts(counts: &[usize]) -> SourceStats {
        let n = counts.len();
        if n == 0 {
            return SourceStats {
                instance_count: 0,
                mean_words: 0.0,
                stdev_words: 0.0,
            };
        }
        let sum: f64 = counts.iter().map(|&c| c as f64).sum();
        let mean = sum / n as f64;
        let stdev = if n < 2 {
            0.0
        } else {
            let ss: f64 = counts.iter().map(|&c| (c as f64 - mean).powi(2)).sum();
            (ss / (n - 1) as f64).sqrt()
        };
        SourceStats {
            instance_count: n,
            mean_words: mean,
            stdev_words: stdev,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub format_version: u32,
    pub per_source: BTreeMap<Source, SourceStats>,
    pub total: SourceStats,
}

impl CorpusStats {
    pub fn to_table(&self) -> String {
        let mut out = format!("{:<8} {:>12} {:>20}\n", "Corpus", "# Instance", "Avg. Word");
        for (source, s) in &self.per_source {
            out.push_str(&format!(
                "{:<8} {:>12} {:>20}\n",
                source.as_str(),
                s.instance_count,
                format!("{:.2} ± {:.2}", s.mean_words, s.stdev_words)
            ));
        }
        out.push_str(&format!(
            "{:<8} {:>12} {:>20}\n",
            "Total",
            self.total.instance_count,
            format!("{:.2} ± {:.2}", self.total.mean_words, self.total.stdev_words)
        ));
        out
    }
}

/// An in-memory corpus. Documents keep insertion order; that order defines
/// the ordinals used by the indexes.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    docs: Vec<Document>,
    by_id: HashMap<String, usize>,
    texts: HashSet<String>,
}

impl Corpus {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a corpus from documents whose text is already normalized.
    /// Exact-text duplicates are kept; ids must be unique.
    pub fn from_documents(docs: impl IntoIterator<Item = Document>) -> Result<Self, CorpusError> {
        let mut corpus = Corpus::new();
        for doc in docs {
            corpus.push(doc)?;
        }
        Ok(corpus)
    }

    fn push(&mut self, doc: Document) -> Result<(), CorpusError> {
        if self.by_id.contains_key(&doc.id) {
            return Err(CorpusError::DuplicateId(doc.id));
        }
        self.by_id.insert(doc.id.clone(), self.docs.len());
        self.texts.insert(doc.text.clone());
        self.docs.push(doc);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn documents(&self) -> &[Document] {
        &self.docs
    }

    pub fn get_document(&self, id: &str) -> Result<&Document, CorpusError> {
        self.by_id
            .get(id)
            .map(|&i| &self.docs[i])
            .ok_or_else(|| CorpusError::NotFound(id.to_string()))
    }

    pub fn ordinal(&self, id: &str) -> Option<usize> {
        self.by_id.get(id).copied()
    }

    pub fn contains_text(&self, text: &str) -> bool {
        self.texts.contains(text)
    }

    /// Documents from the given sources, in corpus order.
    pub fn filter_sources(&self, sources: &[Source]) -> Corpus {
        let mut out = Corpus::new();
        for doc in self.docs.iter().filter(|d| sources.contains(&d.source)) {
            out.push(doc.clone()).expect("ids are unique in the parent corpus");
        }
        out
    }

    /// Drops every document whose text is in `texts`.
    pub fn without_texts(&self, texts: &HashSet<String>) -> Corpus {
        let mut out = Corpus::new();
        for doc in self.docs.iter().filter(|d| !texts.contains(&d.text)) {
            out.push(doc.clone()).expect("ids are unique in the parent corpus");
        }
        out
    }

    /// Ingests one line-delimited JSON file. Malformed lines are reported and
    /// skipped; exact normalized-text duplicates are counted and skipped.
    pub fn ingest_jsonl(&mut self, path: &Path, source: Source, cfg: &NormalizationConfig) -> Result<IngestReport, CorpusError> {
        let file = File::open(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => CorpusError::FileNotFound(path.to_path_buf()),
            _ => CorpusError::Io(e),
        })?;
        self.ingest_reader(BufReader::new(file), source, cfg)
    }

    pub fn ingest_reader(&mut self, reader: impl BufRead, source: Source, cfg: &NormalizationConfig) -> Result<IngestReport, CorpusError> {
        let mut report = IngestReport::default();
        for (idx, line) in reader.lines().enumerate() {
            let line_no = idx + 1;
            let line = line?;
            let mut reject = |reason: String| {
                log::warn!("{source} line {line_no}: {reason}");
                report.rejected += 1;
                report.errors.push(RecordError { line: line_no, reason });
            };
            let record: InputRecord = match serde_json::from_str(&line) {
                Ok(r) => r,
                Err(e) => {
                    reject(format!("malformed record: {e}"));
                    continue;
                }
            };
            let text = match normalize_text(&record.text, cfg) {
                Ok(t) => t,
                Err(e) => {
                    reject(e.to_string());
                    continue;
                }
            };
            if self.texts.contains(&text) {
                report.deduped += 1;
                continue;
            }
            let id = record.id.unwrap_or_else(|| format!("{}-{}", source.as_str(), line_no));
            if self.by_id.contains_key(&id) {
                reject(format!("duplicate document id {id:?}"));
                continue;
            }
            let origin = record.origin.unwrap_or_default();
            self.push(Document::new(id, text, source, origin))?;
            report.accepted += 1;
        }
        Ok(report)
    }

    pub fn compute_stats(&self) -> Result<CorpusStats, CorpusError> {
        if self.docs.is_empty() {
            return Err(CorpusError::EmptyCorpus);
        }
        let mut grouped: BTreeMap<Source, Vec<usize>> = BTreeMap::new();
        for doc in &self.docs {
            grouped.entry(doc.source).or_default().push(doc.token_count);
        }
        let all: Vec<usize> = self.docs.iter().map(|d| d.token_count).collect();
        Ok(CorpusStats {
            format_version: FORMAT_VERSION,
            per_source: grouped.iter().map(|(s, c)| (*s, SourceStats::from_counts(c))).collect(),
            total: SourceStats::from_counts(&all),
        })
    }

    /// Writes one document per line plus a `<path>.stats.json` sidecar.
    pub fn save(&self, path: &Path) -> Result<(), CorpusError> {
        let mut w = BufWriter::new(File::create(path)?);
        for doc in &self.docs {
            serde_json::to_writer(&mut w, doc).map_err(std::io::Error::from)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
        if !self.docs.is_empty() {
            let stats = self.compute_stats()?;
            let mut body = serde_json::to_string_pretty(&stats).map_err(std::io::Error::from)?;
            body.push('\n');
            std::fs::write(stats_path(path), body)?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Corpus, CorpusError> {
        let file = File::open(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => CorpusError::FileNotFound(path.to_path_buf()),
            _ => CorpusError::Io(e),
        })?;
        let mut corpus = Corpus::new();
        for (idx, line) in BufReader::new(file).lines().enumerate() {
            let line = line?;
            if line.is_empty() {
                continue;
            }
            let corrupt = |reason: String| CorpusError::Corrupt {
                path: path.to_path_buf(),
                line: idx + 1,
                reason,
            };
            let doc: Document = serde_json::from_str(&line).map_err(|e| corrupt(e.to_string()))?;
            if doc.token_count != doc.text.split_whitespace().count() {
                return Err(corrupt("token_count does not match text".into()));
            }
            corpus.push(doc).map_err(|e| corrupt(e.to_string()))?;
        }
        Ok(corpus)
    }
}

pub fn stats_path(corpus_path: &Path) -> PathBuf {
    let mut s = corpus_path.as_os_str().to_owned();
    s.push(".stats.json");
    PathBuf::from(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    fn ingest(lines: &str, source: Source) -> (Corpus, IngestReport) {
        let mut c = Corpus::new();
        let r = c
            .ingest_reader(Cursor::new(lines.as_bytes()), source, &NormalizationConfig::default())
            .unwrap();
        (c, r)
    }

    #[test]
    fn normalize_examples() {
        let cfg = NormalizationConfig::default();
        assert_eq!(normalize_text("  A Dog RUNS.  ", &cfg).unwrap(), "a dog runs.");
        assert_eq!(normalize_text("a dog runs.", &cfg).unwrap(), "a dog runs.");
        assert_eq!(normalize_text("Goat\t has\nfour legs", &cfg).unwrap(), "goat has four legs");
    }

    #[test]
    fn normalize_empty_is_error() {
        let cfg = NormalizationConfig::default();
        assert!(matches!(normalize_text(" \t\n", &cfg), Err(CorpusError::EmptyAfterNormalization)));
        assert!(matches!(normalize_text("\u{7}", &cfg), Err(CorpusError::EmptyAfterNormalization)));
    }

    #[test]
    fn normalize_nfc_and_controls() {
        let cfg = NormalizationConfig::default();
        // e + combining acute composes to a single code point
        assert_eq!(normalize_text("Cafe\u{301}\u{0} bar", &cfg).unwrap(), "caf\u{e9} bar");
        let off = NormalizationConfig {
            lowercase: false,
            collapse_whitespace: false,
            unicode_nfc: false,
            strip_control_chars: false,
        };
        assert_eq!(normalize_text("  A  B ", &off).unwrap(), "A  B");
    }

    #[test]
    fn ingest_dedups_exact_text() {
        let (c, r) = ingest(
            "{\"text\":\"Goat has four legs\"}\n{\"text\":\"goat  has four legs\"}\n{\"text\":\"mop up the floor\"}\n",
            Source::Haf,
        );
        assert_eq!((r.accepted, r.rejected, r.deduped), (2, 0, 1));
        assert_eq!(c.len(), 2);
    }

    #[test]
    fn ingest_rejects_missing_text() {
        let (c, r) = ingest("{\"id\":\"x\"}\n", Source::Haf);
        assert_eq!((r.accepted, r.rejected), (0, 1));
        assert_eq!(r.errors[0].line, 1);
        assert!(c.is_empty());
    }

    #[test]
    fn ingest_omcs_examples() {
        let (_, r) = ingest(
            "{\"text\":\"goat has four legs\"}\n{\"text\":\"study hard to win scholarship\"}\n",
            Source::Haf,
        );
        assert_eq!(r.accepted, 2);
    }

    #[test]
    fn ingest_continues_past_malformed_lines() {
        let (c, r) = ingest(
            "not json\n\n{\"text\":\"a b\",\"origin\":\"ATOMIC\",\"id\":\"k\"}\n{\"text\":\"   \"}\n",
            Source::Cbd,
        );
        assert_eq!((r.accepted, r.rejected, r.deduped), (1, 3, 0));
        assert_eq!(r.total(), 4);
        let d = c.get_document("k").unwrap();
        assert_eq!(d.origin, "ATOMIC");
        assert_eq!(d.source, Source::Cbd);
    }

    #[test]
    fn assigned_ids_follow_line_numbers() {
        let mut lines = String::new();
        for i in 1..=20 {
            lines.push_str(&format!("{{\"text\":\"fact number {i}\"}}\n"));
        }
        let (c, _) = ingest(&lines, Source::Crc);
        assert_eq!(c.get_document("CRC-17").unwrap().text, "fact number 17");
        assert!(matches!(c.get_document("CRC-99"), Err(CorpusError::NotFound(_))));
    }

    #[test]
    fn colliding_explicit_id_rejected() {
        let (c, r) = ingest("{\"id\":\"a\",\"text\":\"one\"}\n{\"id\":\"a\",\"text\":\"two\"}\n", Source::Haf);
        assert_eq!((r.accepted, r.rejected), (1, 1));
        assert_eq!(c.len(), 1);
    }

    #[test]
    fn missing_file() {
        let mut c = Corpus::new();
        let err = c
            .ingest_jsonl(Path::new("/nonexistent/x.jsonl"), Source::Haf, &NormalizationConfig::default())
            .unwrap_err();
        assert!(matches!(err, CorpusError::FileNotFound(_)));
    }

    #[test]
    fn stats_closed_forms() {
        let c = Corpus::from_documents([
            Document::new("a", "w w", Source::Haf, ""),
            Document::new("b", "w w w w", Source::Haf, ""),
            Document::new("c", "w w w w w w", Source::Haf, ""),
        ])
        .unwrap();
        let s = c.compute_stats().unwrap();
        assert_eq!(s.total.instance_count, 3);
        assert_eq!(s.total.mean_words, 4.0);
        assert_eq!(s.total.stdev_words, 2.0);

        let one = Corpus::from_documents([Document::new("a", "a b c d e", Source::Crc, "")]).unwrap();
        let s = one.compute_stats().unwrap();
        assert_eq!((s.total.instance_count, s.total.mean_words, s.total.stdev_words), (1, 5.0, 0.0));

        assert!(matches!(Corpus::new().compute_stats(), Err(CorpusError::EmptyCorpus)));
    }

    #[test]
    fn stats_per_source_sum_to_total() {
        let c = Corpus::from_documents([
            Document::new("a", "x y", Source::Haf, ""),
            Document::new("b", "x", Source::Cbd, ""),
            Document::new("c", "x y z", Source::Cbd, ""),
        ])
        .unwrap();
        let s = c.compute_stats().unwrap();
        let sum: usize = s.per_source.values().map(|v| v.instance_count).sum();
        assert_eq!(sum, s.total.instance_count);
        assert_eq!(s.per_source[&Source::Cbd].mean_words, 2.0);
    }

    #[test]
    fn persisted_key_order() {
        let doc = Document::new("HAF-1", "goat has four legs", Source::Haf, "OMCS");
        assert_eq!(
            serde_json::to_string(&doc).unwrap(),
            r#"{"id":"HAF-1","text":"goat has four legs","source":"HAF","origin":"OMCS","token_count":4}"#
        );
    }

    #[test]
    fn save_load_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let (c, _) = ingest("{\"text\":\"Ünïcode text\"}\n{\"text\":\"b c\"}\n", Source::Haf);
        let p = dir.path().join("corpus.jsonl");
        c.save(&p).unwrap();
        let back = Corpus::load(&p).unwrap();
        assert_eq!(back.documents(), c.documents());
        assert!(stats_path(&p).exists());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn ingest_accounting(texts in proptest::collection::vec("[ a-cA-C\t]{0,6}", 0..30)) {
                let mut lines = String::new();
                for t in &texts {
                    lines.push_str(&serde_json::json!({ "text": t }).to_string());
                    lines.push('\n');
                }
                let (c, r) = ingest(&lines, Source::Custom);
                prop_assert_eq!(r.total(), texts.len());
                prop_assert_eq!(c.len(), r.accepted);
            }

            #[test]
            fn mean_matches_direct_sum(counts in proptest::collection::vec(1usize..40, 1..50)) {
                let docs = counts.iter().enumerate().map(|(i, &n)| {
                    Document::new(format!("d{i}"), vec!["w"; n].join(" "), Source::Haf, "")
                });
                let c = Corpus::from_documents(docs).unwrap();
                let s = c.compute_stats().unwrap();
                let direct = counts.iter().sum::<usize>() as f64 / counts.len() as f64;
                prop_assert!(((s.total.mean_words - direct) / direct).abs() < 1e-9);
            }

            #[test]
            fn normalize_idempotent(raw in "\\PC{0,20}") {
                let cfg = NormalizationConfig::default();
                if let Ok(once) = normalize_text(&raw, &cfg) {
                    prop_assert_eq!(normalize_text(&once, &cfg).unwrap(), once);
                }
            }
        }
    }
}
