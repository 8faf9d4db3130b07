//! Pipeline configuration file.

use std::path::{Path, PathBuf};

use csret_core::dense::TrainConfig;
use csret_core::text::fnv1a64;
use csret_core::{Bm25Params, NormalizationConfig, TokenizerConfig};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Artifact locations. Relative paths resolve against the config file's
/// directory, or the working directory when no file is given.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Paths {
    pub corpus: PathBuf,
    pub sparse_index: PathBuf,
    pub dense_index: PathBuf,
    pub query_encoder: PathBuf,
    pub doc_encoder: PathBuf,
    pub pairs: PathBuf,
    pub qrels: PathBuf,
    pub reports: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            corpus: "corpus.jsonl".into(),
            sparse_index: "sparse.rspx".into(),
            dense_index: "dense.rdnx".into(),
            query_encoder: "query.renc".into(),
            doc_encoder: "doc.renc".into(),
            pairs: "pairs.jsonl".into(),
            qrels: "qrels.jsonl".into(),
            reports: "reports".into(),
        }
    }
}

impl Paths {
    fn resolve(&mut self, base: &Path) {
        for p in [
            &mut self.corpus,
            &mut self.sparse_index,
            &mut self.dense_index,
            &mut self.query_encoder,
            &mut self.doc_encoder,
            &mut self.pairs,
            &mut self.qrels,
            &mut self.reports,
        ] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub paths: Paths,
    pub train: TrainConfig,
    pub bm25: Bm25Params,
    /// Retrieval depth when a command is not given one.
    pub k: usize,
    pub normalization: NormalizationConfig,
    pub tokenizer: TokenizerConfig,
    pub reader_endpoint: Option<String>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            paths: Paths::default(),
            train: TrainConfig::default(),
            bm25: Bm25Params::default(),
            k: 10,
            normalization: NormalizationConfig::default(),
            tokenizer: TokenizerConfig::default(),
            reader_endpoint: None,
        }
    }
}

impl PipelineConfig {
    /// Reads `path` if given, otherwise uses defaults rooted at the working
    /// directory.
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let (mut cfg, base) = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
                let cfg: PipelineConfig = serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
                (cfg, p.parent().map(Path::to_path_buf).unwrap_or_default())
            }
            None => (PipelineConfig::default(), PathBuf::new()),
        };
        cfg.paths.resolve(&base);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.k == 0 {
            return Err(CliError::Config("k must be at least 1".into()));
        }
        self.bm25.validate().map_err(|e| CliError::Config(e.to_string()))?;
        self.train.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(())
    }

    /// FNV-1a of the canonical JSON form.
    pub fn config_hash(&self) -> u64 {
        fnv1a64(serde_json::to_string(self).expect("config serializes").as_bytes())
    }
}

/// Fails with `MissingArtifact` unless `path` exists.
pub fn require(path: &Path) -> Result<(), CliError> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::MissingArtifact(path.to_path_buf()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relative_paths_follow_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg.json");
        std::fs::write(&path, r#"{"k": 5, "paths": {"corpus": "data/c.jsonl", "pairs": "/abs/p.jsonl"}}"#).unwrap();
        let cfg = PipelineConfig::load(Some(&path)).unwrap();
        assert_eq!(cfg.k, 5);
        assert_eq!(cfg.paths.corpus, dir.path().join("data/c.jsonl"));
        assert_eq!(cfg.paths.pairs, PathBuf::from("/abs/p.jsonl"));
        assert_eq!(cfg.paths.sparse_index, dir.path().join("sparse.rspx"));
    }

    #[test]
    fn rejects_zero_k_and_bad_json() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg.json");
        std::fs::write(&path, r#"{"k": 0}"#).unwrap();
        assert!(matches!(PipelineConfig::load(Some(&path)), Err(CliError::Config(_))));
        std::fs::write(&path, "{").unwrap();
        assert!(matches!(PipelineConfig::load(Some(&path)), Err(CliError::Config(_))));
    }

    #[test]
    fn hash_tracks_content() {
        let a = PipelineConfig::default();
        let mut b = a.clone();
        assert_eq!(a.config_hash(), b.config_hash());
        b.train.seed = 7;
        assert_ne!(a.config_hash(), b.config_hash());
    }
}
