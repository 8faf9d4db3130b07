//! A common face for the sparse and dense retrievers.

use crate::dense::{DenseIndex, EncoderParams};
use crate::rank::ScoredDoc;
use crate::sparse::InvertedIndex;
use crate::Error;

pub trait Retriever {
    /// Label recorded in runs and reports.
    fn label(&self) -> &str;
    fn search(&self, query: &str, k: usize) -> Result<Vec<ScoredDoc>, Error>;
}

impl Retriever for InvertedIndex {
    fn label(&self) -> &str {
        "BM25"
    }

    fn search(&self, query: &str, k: usize) -> Result<Vec<ScoredDoc>, Error> {
        Ok(InvertedIndex::search(self, query, k)?)
    }
}

/// A dense index paired with the query encoder that searches it.
#[derive(Debug, Clone)]
pub struct DenseSearcher {
    pub index: DenseIndex,
    pub query_encoder: EncoderParams,
    pub label: String,
}

impl DenseSearcher {
    pub fn new(index: DenseIndex, query_encoder: EncoderParams) -> Self {
        DenseSearcher {
            index,
            query_encoder,
            label: "DPR".to_string(),
        }
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }
}

impl Retriever for DenseSearcher {
    fn label(&self) -> &str {
        &self.label
    }

    fn search(&self, query: &str, k: usize) -> Result<Vec<ScoredDoc>, Error> {
        Ok(self.index.search(&self.query_encoder, query, k)?)
    }
}
