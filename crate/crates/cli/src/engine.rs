//! Loaded retrieval artifacts, shared by one-shot search and the server.

use std::str::FromStr;

use csret_core::{Corpus, DenseIndex, DenseSearcher, EncoderParams, InvertedIndex, Retriever};
use serde::{Deserialize, Serialize};

use crate::config::{require, PipelineConfig};
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum RetrieverKind {
    #[value(alias = "bm25")]
    Sparse,
    #[value(alias = "dpr")]
    Dense,
}

impl RetrieverKind {
    pub fn as_str(self) -> &'static str {
        match self {
            RetrieverKind::Sparse => "sparse",
            RetrieverKind::Dense => "dense",
        }
    }
}

impl FromStr for RetrieverKind {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        match s.to_ascii_lowercase().as_str() {
            "sparse" | "bm25" => Ok(RetrieverKind::Sparse),
            "dense" | "dpr" => Ok(RetrieverKind::Dense),
            other => Err(CliError::Usage(format!("unknown retriever {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchHit {
    pub id: String,
    pub score: f64,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResponse {
    pub results: Vec<SearchHit>,
    pub k: usize,
    pub retriever: String,
}

pub struct Engine {
    pub corpus: Corpus,
    pub sparse: Option<InvertedIndex>,
    pub dense: Option<DenseSearcher>,
}

impl Engine {
    /// Loads the corpus and the requested retrievers. A dense index is only
    /// accepted if it was built by the document encoder on disk.
    pub fn load(cfg: &PipelineConfig, kinds: &[RetrieverKind]) -> Result<Engine, CliError> {
        Engine::load_check(cfg, kinds)?;
        let p = &cfg.paths;
        let corpus = Corpus::load(&p.corpus).map_err(csret_core::Error::from)?;
        let sparse = if kinds.contains(&RetrieverKind::Sparse) {
            Some(InvertedIndex::load(&p.sparse_index).map_err(csret_core::Error::from)?)
        } else {
            None
        };
        let dense = if kinds.contains(&RetrieverKind::Dense) {
            let index = DenseIndex::load(&p.dense_index).map_err(csret_core::Error::from)?;
            let doc_encoder = EncoderParams::load(&p.doc_encoder).map_err(csret_core::Error::from)?;
            index.check_encoder(&doc_encoder).map_err(csret_core::Error::from)?;
            let query_encoder = EncoderParams::load(&p.query_encoder).map_err(csret_core::Error::from)?;
            Some(DenseSearcher::new(index, query_encoder))
        } else {
            None
        };
        Ok(Engine { corpus, sparse, dense })
    }

    /// Fails with `MissingArtifact` if any file `load` needs is absent.
    pub fn load_check(cfg: &PipelineConfig, kinds: &[RetrieverKind]) -> Result<(), CliError> {
        let p = &cfg.paths;
        require(&p.corpus)?;
        if kinds.contains(&RetrieverKind::Sparse) {
            require(&p.sparse_index)?;
        }
        if kinds.contains(&RetrieverKind::Dense) {
            for path in [&p.dense_index, &p.query_encoder, &p.doc_encoder] {
                require(path)?;
            }
        }
        Ok(())
    }

    pub fn retriever(&self, kind: RetrieverKind) -> Result<&dyn Retriever, CliError> {
        let r: Option<&dyn Retriever> = match kind {
            RetrieverKind::Sparse => self.sparse.as_ref().map(|r| r as &dyn Retriever),
            RetrieverKind::Dense => self.dense.as_ref().map(|r| r as &dyn Retriever),
        };
        r.ok_or_else(|| CliError::Usage(format!("{} retriever is not loaded", kind.as_str())))
    }

    pub fn search(&self, kind: RetrieverKind, query: &str, k: usize) -> Result<SearchResponse, CliError> {
        if k == 0 {
            return Err(CliError::Usage("k must be at least 1".into()));
        }
        let ranked = self.retriever(kind)?.search(query, k)?;
        let results = ranked
            .into_iter()
            .map(|hit| {
                let text = self.corpus.get_document(&hit.id).map_err(csret_core::Error::from)?.text.clone();
                Ok(SearchHit {
                    id: hit.id,
                    score: hit.score,
                    text,
                })
            })
            .collect::<Result<Vec<_>, CliError>>()?;
        Ok(SearchResponse {
            results,
            k,
            retriever: kind.as_str().to_string(),
        })
    }
}
